//! Space-time interpolation of `log p` from a snapshot series.
//!
//! In space each snapshot is a cubic Hermite interpolant of the extrapolated
//! log density with finite-difference slopes; outside the grid it continues
//! as a concave quadratic, so the score continues linearly. In time the interpolant is linear between
//! neighbouring snapshots.

use crate::error::{Error, Result};
use crate::measure::{central_difference, Grid, RELATIVE_CLIP};
use crate::pde::FlowSnapshotSeries;
use crate::potential::{total_gradient, Perturbation, Potential};

#[derive(Debug, Clone)]
pub struct DensityField {
    grid: Grid,
    times: Vec<f64>,
    log_p: Vec<Vec<f64>>,
    slope: Vec<Vec<f64>>,
    /// Second derivative of `log p` at the (left, right) grid ends, capped at 0.
    edge_curvature: Vec<(f64, f64)>,
    potential: Potential,
    perturbation: Option<Perturbation>,
}

const TIME_SLACK: f64 = 1e-9;

impl DensityField {
    pub fn new(flow: &FlowSnapshotSeries) -> Self {
        let grid = *flow.grid();
        let h = grid.spacing();
        let log_p: Vec<Vec<f64>> = flow.states.iter().map(|d| d.log_values(RELATIVE_CLIP)).collect();
        let slope = log_p.iter().map(|l| central_difference(l, h)).collect();
        let edge_curvature = log_p
            .iter()
            .map(|l| {
                let n = l.len();
                let left = (l[0] - 2.0 * l[1] + l[2]) / (h * h);
                let right = (l[n - 1] - 2.0 * l[n - 2] + l[n - 3]) / (h * h);
                (left.min(0.0), right.min(0.0))
            })
            .collect();
        Self {
            grid,
            times: flow.times.clone(),
            log_p,
            slope,
            edge_curvature,
            potential: flow.potential.clone(),
            perturbation: flow.perturbation,
        }
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn perturbation(&self) -> Option<&Perturbation> {
        self.perturbation.as_ref()
    }

    /// Snapshot index `k` and weight `λ` with `t = (1-λ) t_k + λ t_{k+1}`.
    fn bracket(&self, t: f64) -> Result<(usize, f64)> {
        let (a, b) = (self.t_start(), self.t_end());
        if !(t >= a - TIME_SLACK && t <= b + TIME_SLACK) {
            return Err(Error::OutOfRange { t, start: a, end: b });
        }
        if self.times.len() == 1 {
            return Ok((0, 0.0));
        }
        let k = self.times.partition_point(|&s| s <= t).clamp(1, self.times.len() - 1) - 1;
        let lam = ((t - self.times[k]) / (self.times[k + 1] - self.times[k])).clamp(0.0, 1.0);
        Ok((k, lam))
    }

    /// Value and derivative of the spatial interpolant of snapshot `k`.
    fn hermite(&self, k: usize, x: f64) -> (f64, f64) {
        let (y, m) = (&self.log_p[k], &self.slope[k]);
        let n = self.grid.len();
        let (cl, cr) = self.edge_curvature[k];
        if x <= self.grid.x_min() {
            let d = x - self.grid.x_min();
            return (y[0] + m[0] * d + 0.5 * cl * d * d, m[0] + cl * d);
        }
        if x >= self.grid.x_max() {
            let d = x - self.grid.x_max();
            return (y[n - 1] + m[n - 1] * d + 0.5 * cr * d * d, m[n - 1] + cr * d);
        }
        let h = self.grid.spacing();
        let (i, off) = self.grid.locate(x);
        let s = off / h;
        let (s2, s3) = (s * s, s * s * s);
        let value = (2.0 * s3 - 3.0 * s2 + 1.0) * y[i]
            + (s3 - 2.0 * s2 + s) * h * m[i]
            + (-2.0 * s3 + 3.0 * s2) * y[i + 1]
            + (s3 - s2) * h * m[i + 1];
        let deriv = (6.0 * s2 - 6.0 * s) / h * y[i]
            + (3.0 * s2 - 4.0 * s + 1.0) * m[i]
            + (6.0 * s - 6.0 * s2) / h * y[i + 1]
            + (3.0 * s2 - 2.0 * s) * m[i + 1];
        (value, deriv)
    }

    /// `(log p, ∇log p)` at `(t, x)`.
    pub fn log_p_and_score(&self, t: f64, x: f64) -> Result<(f64, f64)> {
        let (k, lam) = self.bracket(t)?;
        let (v0, d0) = self.hermite(k, x);
        if lam == 0.0 {
            return Ok((v0, d0));
        }
        let (v1, d1) = self.hermite(k + 1, x);
        Ok(((1.0 - lam) * v0 + lam * v1, (1.0 - lam) * d0 + lam * d1))
    }

    pub fn log_p(&self, t: f64, x: f64) -> Result<f64> {
        Ok(self.log_p_and_score(t, x)?.0)
    }

    pub fn score(&self, t: f64, x: f64) -> Result<f64> {
        Ok(self.log_p_and_score(t, x)?.1)
    }

    /// `log ℓ = log p + 2Ψ`.
    pub fn log_ell(&self, t: f64, x: f64) -> Result<f64> {
        Ok(self.log_p(t, x)? + 2.0 * self.potential.evaluate(x))
    }

    /// `∇log ℓ = ∇log p + 2Ψ'`.
    pub fn grad_log_ell(&self, t: f64, x: f64) -> Result<f64> {
        Ok(self.score(t, x)? + 2.0 * self.potential.gradient(x))
    }

    /// `(log ℓ, ∇log ℓ)` at `(t, x)`.
    pub fn log_ell_and_grad(&self, t: f64, x: f64) -> Result<(f64, f64)> {
        let (l, s) = self.log_p_and_score(t, x)?;
        Ok((l + 2.0 * self.potential.evaluate(x), s + 2.0 * self.potential.gradient(x)))
    }

    /// `∂t log p`: centered over the neighbouring snapshots when `t` is a
    /// saved time, otherwise the slope of the bracketing interval.
    pub fn dt_log_p(&self, t: f64, x: f64) -> Result<f64> {
        let (k, lam) = self.bracket(t)?;
        if self.times.len() == 1 {
            return Ok(0.0);
        }
        let at_node = |j: usize| (self.times[j] - t).abs() <= TIME_SLACK;
        let (a, b) = if lam == 0.0 && at_node(k) && k > 0 {
            (k - 1, k + 1)
        } else if lam == 1.0 && at_node(k + 1) && k + 2 < self.times.len() {
            (k, k + 2)
        } else {
            (k, k + 1)
        };
        Ok((self.hermite(b, x).0 - self.hermite(a, x).0) / (self.times[b] - self.times[a]))
    }

    /// Drift of the time-reversed diffusion at forward time `t`:
    /// `∇log p + Ψ' + β`, which equals `∇log ℓ - Ψ' + β`.
    pub fn reversed_drift(&self, t: f64, x: f64) -> Result<f64> {
        Ok(self.score(t, x)? + total_gradient(&self.potential, self.perturbation.as_ref(), x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::GridDensity;
    use crate::pde::{solve_forward, SolverOptions};

    fn heat_flow() -> FlowSnapshotSeries {
        let init = GridDensity::gaussian(Grid::standard(), 0.0, 1.0).unwrap();
        solve_forward(&Potential::Zero, &init, 0.0, 1.0, SolverOptions::new(1e-4, 100), None).unwrap()
    }

    #[test]
    fn heat_score_and_reversed_drift() {
        let field = DensityField::new(&heat_flow());
        for t in [0.0, 0.25, 0.505, 1.0] {
            for x in [-3.0, -0.7, 0.0, 1.3, 2.9] {
                let exact = -x / (1.0 + t);
                assert!((field.score(t, x).unwrap() - exact).abs() < 2e-3, "t={t} x={x}");
                assert!((field.reversed_drift(t, x).unwrap() - exact).abs() < 2e-3);
            }
        }
        assert!(field.score(1.1, 0.0).is_err());
        assert!(field.score(-0.1, 0.0).is_err());
    }

    #[test]
    fn stationary_reversed_drift_is_forward_drift() {
        let pot = Potential::normalized_ornstein_uhlenbeck();
        let init = GridDensity::from_fn(Grid::standard(), |x| pot.gibbs_density(x)).unwrap();
        let flow = solve_forward(&pot, &init, 0.0, 0.2, SolverOptions::new(1e-3, 50), None).unwrap();
        let field = DensityField::new(&flow);
        for x in [-12.0, -4.0, -0.3, 0.0, 2.2, 9.5] {
            let d = field.reversed_drift(0.13, x).unwrap();
            assert!((d + x / 2.0).abs() < 1e-3, "x={x} {d}");
            assert!(field.grad_log_ell(0.13, x).unwrap().abs() < 1e-3);
            assert!(field.dt_log_p(0.1, x).unwrap().abs() < 1e-6);
        }
    }

    #[test]
    fn hermite_is_smooth_in_x() {
        let field = DensityField::new(&heat_flow());
        let x0 = Grid::standard().node(1000);
        let (l, r) = (field.log_p(0.3, x0 - 1e-9).unwrap(), field.log_p(0.3, x0 + 1e-9).unwrap());
        assert!((l - r).abs() < 1e-8);
        let dx = 1e-5;
        for x in [0.123, 1.77] {
            let fd = (field.log_p(0.3, x + dx).unwrap() - field.log_p(0.3, x - dx).unwrap()) / (2.0 * dx);
            assert!((fd - field.score(0.3, x).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn time_derivative_of_log_p() {
        // heat kernel: ∂t log p = -1/(2(1+t)) + x²/(2(1+t)²)
        let field = DensityField::new(&heat_flow());
        for t in [0.2, 0.55] {
            for x in [-1.0, 0.0, 2.0] {
                let exact = -0.5 / (1.0 + t) + x * x / (2.0 * (1.0 + t) * (1.0 + t));
                assert!((field.dt_log_p(t, x).unwrap() - exact).abs() < 2e-3, "t={t} x={x}");
            }
        }
    }
}

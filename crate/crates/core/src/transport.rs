//! Quadratic Wasserstein geometry on the line.
//!
//! Grid densities are read as piecewise-linear functions, so their CDFs are
//! piecewise quadratic and their quantile functions are available in closed
//! form cell by cell. `W₂² = ∫₀¹ (F₁⁻¹ - F₂⁻¹)² du` is integrated by merging
//! the CDF breakpoints of both densities and applying a four-point
//! Gauss–Legendre rule on every piece, where both quantile functions are smooth.

use crate::error::{invalid, Error, Result};
use crate::functionals::{likelihood_score, relative_entropy, FlowDiagnostics};
use crate::measure::{Grid, GridDensity, GridFunction, DENSITY_FLOOR};
use crate::pde::FlowSnapshotSeries;
use crate::potential::Potential;

const GL_NODES: [f64; 4] = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
const GL_WEIGHTS: [f64; 4] = [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];

/// Quantile function of a grid density with its breakpoints cached.
#[derive(Debug, Clone)]
struct Quantiles<'a> {
    grid: &'a Grid,
    p: &'a [f64],
    /// Normalized CDF at the nodes.
    c: Vec<f64>,
}

impl<'a> Quantiles<'a> {
    fn new(d: &'a GridDensity) -> Self {
        let mut c = d.cdf_nodes();
        let total = *c.last().unwrap();
        c.iter_mut().for_each(|v| *v /= total);
        Self { grid: d.grid(), p: d.values(), c }
    }

    fn cell_of(&self, u: f64) -> usize {
        self.c.partition_point(|&v| v <= u).saturating_sub(1).min(self.p.len() - 2)
    }

    /// Quantile at `u`, known to lie in cell `i`.
    fn in_cell(&self, i: usize, u: f64) -> f64 {
        let h = self.grid.spacing();
        let mass = self.c[i + 1] - self.c[i];
        if mass <= 0.0 {
            return self.grid.node(i);
        }
        // mass-normalized density at the cell ends
        let scale = mass / (0.5 * h * (self.p[i] + self.p[i + 1]));
        let (b, e) = (self.p[i] * scale, self.p[i + 1] * scale);
        let r = (u - self.c[i]).max(0.0);
        let a = 0.5 * (e - b) / h;
        let denom = b + (b * b + 4.0 * a * r).max(0.0).sqrt();
        let xi = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        self.grid.node(i) + xi.clamp(0.0, h)
    }

    fn at(&self, u: f64) -> f64 {
        self.in_cell(self.cell_of(u), u)
    }
}

/// Quantile values on the midpoint grid `u_j = (j + ½)/n_q`, clipped to
/// `[1e-6, 1 - 1e-6]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileRep {
    pub u: Vec<f64>,
    pub values: Vec<f64>,
}

impl QuantileRep {
    pub fn new(d: &GridDensity, n_q: usize) -> Result<Self> {
        if n_q == 0 {
            return Err(invalid("n_q must be positive"));
        }
        let q = Quantiles::new(d);
        let u: Vec<f64> = (0..n_q).map(|j| ((j as f64 + 0.5) / n_q as f64).clamp(1e-6, 1.0 - 1e-6)).collect();
        let values = u.iter().map(|&u| q.at(u)).collect();
        Ok(Self { u, values })
    }

    /// Midpoint-rule `W₂` between two representations on the same u-grid.
    pub fn midpoint_w2(&self, other: &QuantileRep) -> Result<f64> {
        if self.u != other.u {
            return Err(Error::GridMismatch("quantile grids differ".into()));
        }
        let n = self.u.len() as f64;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok((s / n).sqrt())
    }
}

/// `W₂(d1, d2)` computed exactly up to the Gauss–Legendre rule on each piece.
pub fn wasserstein2(d1: &GridDensity, d2: &GridDensity) -> f64 {
    let (q1, q2) = (Quantiles::new(d1), Quantiles::new(d2));
    let mut breaks: Vec<f64> = q1.c.iter().chain(&q2.c).copied().collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let mid = 0.5 * (a + b);
        let (i1, i2) = (q1.cell_of(mid), q2.cell_of(mid));
        let half = 0.5 * (b - a);
        let mut s = 0.0;
        for (z, wt) in GL_NODES.iter().zip(GL_WEIGHTS) {
            let u = mid + half * z;
            let d = q1.in_cell(i1, u) - q2.in_cell(i2, u);
            s += wt * d * d;
        }
        total += half * s;
    }
    total.max(0.0).sqrt()
}

/// Monotone map `T = F₁⁻¹ ∘ F₀` at the nodes of `d0` and `γ = T - id`.
pub fn brenier_map(d0: &GridDensity, d1: &GridDensity) -> (GridFunction, GridFunction) {
    let q1 = Quantiles::new(d1);
    let mut c0 = d0.cdf_nodes();
    let total = *c0.last().unwrap();
    c0.iter_mut().for_each(|v| *v /= total);
    let grid = *d0.grid();
    let t: Vec<f64> = c0.iter().map(|&u| q1.at(u)).collect();
    let gamma = t.iter().zip(grid.nodes()).map(|(t, x)| t - x).collect();
    (GridFunction { grid, values: t }, GridFunction { grid, values: gamma })
}

/// Density of `(id + tγ)#P₀` on the grid of `d0`, obtained by inverting the
/// interpolated quantile function `(1-t) F₀⁻¹ + t F₁⁻¹` at every node and
/// differentiating the resulting CDF.
pub fn displacement_interpolation(d0: &GridDensity, d1: &GridDensity, t: f64) -> Result<GridDensity> {
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid(format!("interpolation time must lie in [0, 1], got {t}")));
    }
    let (q0, q1) = (Quantiles::new(d0), Quantiles::new(d1));
    let qt = |u: f64| (1.0 - t) * q0.at(u) + t * q1.at(u);
    let probe: Vec<f64> = (0..=64).map(|j| qt(j as f64 / 64.0)).collect();
    if probe.windows(2).any(|w| w[1] < w[0] - 1e-12) {
        return Err(invalid("interpolated transport map is not monotone"));
    }
    let grid = *d0.grid();
    let cdf: Vec<f64> = grid
        .nodes()
        .map(|x| {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            if qt(hi) <= x {
                return 1.0;
            }
            if qt(lo) >= x {
                return 0.0;
            }
            for _ in 0..64 {
                let mid = 0.5 * (lo + hi);
                if qt(mid) < x {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect();
    let h = grid.spacing();
    let n = grid.len();
    let raw: Vec<f64> = (0..n)
        .map(|j| {
            let (a, b) = (j.saturating_sub(1), (j + 1).min(n - 1));
            ((cdf[b] - cdf[a]) / ((b - a) as f64 * h)).max(0.0)
        })
        .collect();
    GridDensity::normalize(grid, raw)
}

/// `d/dt H(P_t|Q)` at `t = 0` along the displacement interpolation from `d0`
/// to `d1`: `∫ ∇log ℓ₀ · γ dP₀`.
pub fn geodesic_entropy_slope(d0: &GridDensity, d1: &GridDensity, pot: &Potential) -> f64 {
    let (_, gamma) = brenier_map(d0, d1);
    let a = likelihood_score(d0, pot);
    let w: Vec<f64> = a
        .values
        .iter()
        .zip(&gamma.values)
        .zip(d0.values())
        .map(|((a, g), &p)| if p > DENSITY_FLOOR { a * g * p } else { 0.0 })
        .collect();
    d0.grid().trapezoid(&w)
}

/// Difference quotient `(H(P_t|Q) - H(P₀|Q)) / t` along the geodesic. Both
/// ends go through the same CDF reconstruction so its O(h²) bias cancels
/// instead of being divided by `t`.
pub fn geodesic_entropy_slope_fd(d0: &GridDensity, d1: &GridDensity, pot: &Potential, t: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(invalid(format!("difference step must lie in (0, 1], got {t}")));
    }
    let start = displacement_interpolation(d0, d1, 0.0)?;
    let dt = displacement_interpolation(d0, d1, t)?;
    Ok((relative_entropy(&dt, pot) - relative_entropy(&start, pot)) / t)
}

/// Difference scheme for [`metric_derivative`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Difference {
    /// `W₂(p(t0+h), p(t0-h)) / 2h`.
    Centered,
    /// Right-sided quotient with Richardson extrapolation from `{2h, h}`.
    Forward,
}

/// Metric derivative `lim W₂(P(t), P(t0)) / |t - t0|` of a flow at `t0`.
pub fn metric_derivative(flow: &FlowSnapshotSeries, t0: f64, h: f64, scheme: Difference) -> Result<f64> {
    let spacing = flow.times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if !(h >= spacing - 1e-12) {
        return Err(invalid(format!("step {h} is finer than the snapshot spacing {spacing}")));
    }
    let at = |t: f64| flow.state_at(t);
    match scheme {
        Difference::Centered => Ok(wasserstein2(at(t0 + h)?, at(t0 - h)?) / (2.0 * h)),
        Difference::Forward => {
            let p0 = at(t0)?;
            let d1 = wasserstein2(at(t0 + h)?, p0) / h;
            let d2 = wasserstein2(at(t0 + 2.0 * h)?, p0) / (2.0 * h);
            Ok(2.0 * d1 - d2)
        }
    }
}

/// One-sided entropy slope at `t0` with Richardson extrapolation from `{2h, h}`.
pub fn forward_entropy_slope(flow: &FlowSnapshotSeries, t0: f64, h: f64) -> Result<f64> {
    let pot = &flow.potential;
    let h0 = relative_entropy(flow.state_at(t0)?, pot);
    let d1 = (relative_entropy(flow.state_at(t0 + h)?, pot) - h0) / h;
    let d2 = (relative_entropy(flow.state_at(t0 + 2.0 * h)?, pot) - h0) / (2.0 * h);
    Ok(2.0 * d1 - d2)
}

/// Fill [`FlowDiagnostics::w2_rate`] with `W₂` difference quotients over
/// neighbouring snapshots (centered inside, one-sided at the two ends).
pub fn attach_w2_rates(diag: &mut FlowDiagnostics, flow: &FlowSnapshotSeries) {
    let n = flow.len();
    let rates = (0..n)
        .map(|k| {
            if n < 2 {
                return 0.0;
            }
            let (a, b) = if k == 0 {
                (0, 1)
            } else if k == n - 1 {
                (n - 2, n - 1)
            } else {
                (k - 1, k + 1)
            };
            wasserstein2(&flow.states[a], &flow.states[b]) / (flow.times[b] - flow.times[a])
        })
        .collect();
    diag.w2_rate = Some(rates);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Grid;
    use crate::oracle::{gaussian_w2, GaussianState};
    use crate::pde::{solve_forward, SolverOptions};
    use proptest::prelude::*;

    fn gauss(m: f64, v: f64) -> GridDensity {
        GridDensity::gaussian(Grid::standard(), m, v).unwrap()
    }

    #[test]
    fn w2_examples() {
        let d = gauss(0.3, 0.7);
        assert!(wasserstein2(&d, &d) < 1e-8);
        assert!((wasserstein2(&gauss(0.0, 1.0), &gauss(1.0, 1.0)) - 1.0).abs() < 1e-3);
        assert!((wasserstein2(&gauss(0.0, 1.0), &gauss(0.0, 4.0)) - 1.0).abs() < 1e-3);
        let exact = gaussian_w2(GaussianState::new(1.0, 2.0).unwrap(), GaussianState::new(0.0, 1.0).unwrap());
        assert!((wasserstein2(&gauss(1.0, 2.0), &gauss(0.0, 1.0)) - exact).abs() < 1e-5);
    }

    #[test]
    fn midpoint_rule_agrees_with_exact() {
        let (a, b) = (gauss(1.0, 2.0), gauss(0.0, 1.0));
        let qa = QuantileRep::new(&a, 4096).unwrap();
        let qb = QuantileRep::new(&b, 4096).unwrap();
        let mid = qa.midpoint_w2(&qb).unwrap();
        // the clipped midpoint rule loses the extreme tails
        assert!((mid - wasserstein2(&a, &b)).abs() < 5e-3);
        assert!(qa.values.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn quantile_round_trip() {
        let d = gauss(1.0, 2.0);
        let q = QuantileRep::new(&d, 997).unwrap();
        for (u, x) in q.u.iter().zip(&q.values) {
            if (0.001..=0.999).contains(u) {
                assert!((d.cdf(*x) - u).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn brenier_examples() {
        let d = gauss(0.0, 1.0);
        let (t, g) = brenier_map(&d, &d);
        for i in d.central_window(1e-6) {
            assert!((t.values[i] - d.grid().node(i)).abs() < 1e-6 && g.values[i].abs() < 1e-6);
        }
        let (_, g) = brenier_map(&d, &gauss(1.0, 1.0));
        for i in d.central_window(1e-4) {
            assert!((g.values[i] - 1.0).abs() < 1e-3);
        }
        let (t, _) = brenier_map(&d, &gauss(0.0, 4.0));
        assert!(t.values.windows(2).all(|w| w[1] >= w[0]));
        for i in (0..d.grid().len()).filter(|&i| d.grid().node(i).abs() <= 3.0) {
            assert!((t.values[i] - 2.0 * d.grid().node(i)).abs() < 1e-3);
        }
    }

    #[test]
    fn pushforward_reaches_target() {
        for (a, b) in [(gauss(0.0, 1.0), gauss(0.0, 4.0)), (gauss(1.0, 2.0), gauss(0.0, 1.0))] {
            let pushed = displacement_interpolation(&a, &b, 1.0).unwrap();
            assert!(wasserstein2(&pushed, &b) < 1e-3);
            let start = displacement_interpolation(&a, &b, 0.0).unwrap();
            assert!(wasserstein2(&start, &a) < 1e-3);
        }
    }

    #[test]
    fn geodesic_examples() {
        let (a, b) = (gauss(0.0, 1.0), gauss(1.0, 1.0));
        let mid = displacement_interpolation(&a, &b, 0.5).unwrap();
        assert!(wasserstein2(&mid, &gauss(0.5, 1.0)) < 1e-3);
        for (a, b) in [(gauss(0.0, 1.0), gauss(1.0, 1.0)), (gauss(1.0, 2.0), gauss(0.0, 1.0))] {
            let total = wasserstein2(&a, &b);
            for t in [0.25, 0.5, 0.75] {
                let dt = displacement_interpolation(&a, &b, t).unwrap();
                assert!((wasserstein2(&a, &dt) - t * total).abs() < 1e-3, "t={t}");
            }
        }
        assert!(displacement_interpolation(&a, &b, 1.5).is_err());
    }

    #[test]
    fn geodesic_slope_examples() {
        let pot = Potential::ornstein_uhlenbeck();
        let gibbs = GridDensity::from_fn(Grid::standard(), |x| pot.gibbs_density(x)).unwrap();
        assert!(geodesic_entropy_slope(&gibbs, &gauss(1.0, 2.0), &pot).abs() < 2e-3);
        assert!(geodesic_entropy_slope(&gauss(0.0, 1.0), &gauss(1.0, 1.0), &pot).abs() < 2e-3);
        let (a, b) = (gauss(1.0, 2.0), gauss(0.0, 1.0));
        let s = geodesic_entropy_slope(&a, &b, &pot);
        let exact = 0.5f64.sqrt() - 2.0;
        assert!((s - exact).abs() < 5e-3, "{s}");
        let fd = geodesic_entropy_slope_fd(&a, &b, &pot, 1e-3).unwrap();
        assert!((fd - s).abs() < 1e-3 * s.abs(), "{fd} vs {s}");
    }

    /// Independent oracle for the geodesic slope: E[(X/2 + ½)((X-1)/√2 - X)]
    /// for X ~ N(1,2), by midpoint quadrature on ±12σ.
    #[test]
    fn geodesic_slope_oracle() {
        let (m, s) = (1.0, 2f64.sqrt());
        let n = 200_000;
        let (lo, hi) = (m - 12.0 * s, m + 12.0 * s);
        let h = (hi - lo) / n as f64;
        let mut acc = 0.0;
        for k in 0..n {
            let x = lo + (k as f64 + 0.5) * h;
            let pdf = (-(x - m) * (x - m) / (2.0 * s * s)).exp() / (2.0 * std::f64::consts::PI * s * s).sqrt();
            // ∇log ℓ₀ = -(x-1)/2 + x = x/2 + 1/2
            acc += (0.5 * x + 0.5) * ((x - 1.0) / s - x) * pdf * h;
        }
        assert!((acc - (0.5f64.sqrt() - 2.0)).abs() < 1e-9);
    }

    #[test]
    fn metric_derivative_examples() {
        let pot = Potential::ornstein_uhlenbeck();
        let init = gauss(1.0, 2.0);
        let flow = solve_forward(&pot, &init, 0.0, 0.01, SolverOptions::new(1e-4, 10), None).unwrap();
        let md = metric_derivative(&flow, 0.0, 1e-3, Difference::Forward).unwrap();
        assert!((md - 0.5 * 1.5f64.sqrt()).abs() / 0.61237 < 0.01, "{md}");
        assert!(metric_derivative(&flow, 0.0, 1e-4, Difference::Forward).is_err());

        let heat = solve_forward(&Potential::Zero, &gauss(0.0, 1.0), 0.0, 0.6, SolverOptions::new(1e-4, 10), None).unwrap();
        let md = metric_derivative(&heat, 0.5, 1e-3, Difference::Centered).unwrap();
        let exact = 0.5 * (1.0f64 / 1.5).sqrt();
        assert!((md - exact).abs() / exact < 0.01, "{md}");

        let sp = Potential::normalized_ornstein_uhlenbeck();
        let gibbs = GridDensity::from_fn(Grid::standard(), |x| sp.gibbs_density(x)).unwrap();
        let stat = solve_forward(&sp, &gibbs, 0.0, 0.01, SolverOptions::new(1e-4, 10), None).unwrap();
        assert!(metric_derivative(&stat, 0.005, 1e-3, Difference::Centered).unwrap() < 1e-4);
    }

    fn shifted(d: &GridDensity, delta: f64) -> GridDensity {
        let g = *d.grid();
        GridDensity::from_fn(g, |x| {
            let y = x - delta;
            if y <= g.x_min() || y >= g.x_max() {
                return 0.0;
            }
            let (i, off) = g.locate(y);
            let h = g.spacing();
            d.values()[i] * (1.0 - off / h) + d.values()[i + 1] * off / h
        })
        .unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn triangle_inequality(m in proptest::array::uniform3(-2.0f64..2.0), v in proptest::array::uniform3(0.2f64..3.0)) {
            let g = Grid::new(-10.0, 10.0, 1001).unwrap();
            let d: Vec<GridDensity> = (0..3).map(|k| GridDensity::gaussian(g, m[k], v[k]).unwrap()).collect();
            let ac = wasserstein2(&d[0], &d[2]);
            let ab = wasserstein2(&d[0], &d[1]);
            let bc = wasserstein2(&d[1], &d[2]);
            prop_assert!(ac <= ab + bc + 1e-6);
        }

        #[test]
        fn translation_equivariance(m in -1.0f64..1.0, v in 0.3f64..2.0, delta in -2.0f64..2.0) {
            let d = GridDensity::gaussian(Grid::standard(), m, v).unwrap();
            let s = shifted(&d, delta);
            prop_assert!((wasserstein2(&s, &d) - delta.abs()).abs() < 1e-3);
        }
    }
}

//! Deterministic evolution on the grid.
//!
//! The Fokker–Planck equation `∂t p = ∂x((Ψ' + β) p) + ½ ∂²x p` is discretized
//! with the Chang–Cooper (Scharfetter–Gummel) exponentially fitted flux on a
//! vertex-centred finite-volume mesh (half cells at the two ends, zero flux at
//! the boundary) and advanced by implicit Euler. The face weight
//! `w = 2 (U(x_{i+1}) - U(x_i))`, `U = Ψ + B`, makes the discrete Gibbs density
//! `e^{-2U(x_i)}` an exact zero-flux equilibrium, and the trapezoid mass is
//! conserved to rounding.
//!
//! The likelihood ratio `ℓ = p e^{2Ψ}` has its own solver (central
//! differences, Neumann boundary) so that the two routes can be checked
//! against each other.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::io::{fmt_f64, write_atomic};
use crate::measure::{Grid, GridDensity, GridFunction, DENSITY_FLOOR};
use crate::potential::{total_potential, Perturbation, Potential};

/// Time stepping controls shared by both solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub dt: f64,
    /// Keep every `save_stride`-th step (the final state is always kept).
    pub save_stride: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { dt: 1e-4, save_stride: 10 }
    }
}

impl SolverOptions {
    pub fn new(dt: f64, save_stride: usize) -> Self {
        Self { dt, save_stride }
    }
}

/// Saved states of a (possibly perturbed) Fokker–Planck flow.
#[derive(Debug, Clone)]
pub struct FlowSnapshotSeries {
    pub times: Vec<f64>,
    pub states: Vec<GridDensity>,
    pub potential: Potential,
    pub perturbation: Option<Perturbation>,
}

impl FlowSnapshotSeries {
    pub fn grid(&self) -> &Grid {
        self.states[0].grid()
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the snapshot saved at time `t` (within 1e-9).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = self.times.partition_point(|&s| s < t - 1e-9);
        (k < self.times.len() && (self.times[k] - t).abs() <= 1e-9).then_some(k)
    }

    pub fn state_at(&self, t: f64) -> Result<&GridDensity> {
        self.index_of(t).map(|k| &self.states[k]).ok_or(Error::OutOfRange {
            t,
            start: self.t_start(),
            end: self.t_end(),
        })
    }

    /// Write `index.csv` (`index,t,file`) and one `x,value` CSV per snapshot.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut index = String::from("index,t,file\n");
        for (k, (t, d)) in self.times.iter().zip(&self.states).enumerate() {
            let name = format!("snapshot_{k:05}.csv");
            d.write_csv(&dir.join(&name))?;
            let _ = writeln!(index, "{k},{},{name}", fmt_f64(*t));
        }
        write_atomic(&dir.join("index.csv"), index.as_bytes())
    }

    /// Read back a directory written by [`write_dir`](Self::write_dir).
    pub fn read_dir(dir: &Path, potential: Potential, perturbation: Option<Perturbation>) -> Result<Self> {
        let index_path = dir.join("index.csv");
        let text = fs::read_to_string(&index_path)?;
        let parse_err = |message: String| Error::Parse { path: index_path.clone(), message };
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("index,t,file") {
            return Err(parse_err("expected header `index,t,file`".into()));
        }
        let mut times = Vec::new();
        let mut states = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(parse_err(format!("bad row `{line}`")));
            }
            let t: f64 = cols[1].trim().parse().map_err(|e| parse_err(format!("{e}")))?;
            times.push(t);
            states.push(GridDensity::read_csv(&dir.join(cols[2].trim()))?);
        }
        if states.is_empty() {
            return Err(parse_err("no snapshots listed".into()));
        }
        Ok(Self { times, states, potential, perturbation })
    }
}

/// Bernoulli function `z / (e^z - 1)`.
fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - 0.5 * z
    } else {
        z / z.exp_m1()
    }
}

/// Tridiagonal matrix with a precomputed Thomas factorization.
#[derive(Debug, Clone)]
pub(crate) struct Tridiagonal {
    lower: Vec<f64>,
    upper_star: Vec<f64>,
    denom: Vec<f64>,
}

impl Tridiagonal {
    /// `lower[i]` multiplies `x[i-1]` in row `i` (`lower[0]` unused),
    /// `upper[i]` multiplies `x[i+1]` (`upper[n-1]` unused).
    pub(crate) fn factor(lower: Vec<f64>, diag: &[f64], upper: &[f64]) -> Self {
        let n = diag.len();
        let mut upper_star = vec![0.0; n];
        let mut denom = vec![0.0; n];
        denom[0] = diag[0];
        upper_star[0] = upper[0] / denom[0];
        for i in 1..n {
            denom[i] = diag[i] - lower[i] * upper_star[i - 1];
            if i + 1 < n {
                upper_star[i] = upper[i] / denom[i];
            }
        }
        Self { lower, upper_star, denom }
    }

    pub(crate) fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] /= self.denom[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) / self.denom[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.upper_star[i] * rhs[i + 1];
        }
    }
}

fn step_count(t0: f64, t_end: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid(format!("dt must be > 0, got {dt}")));
    }
    if !(t_end > t0) {
        return Err(invalid(format!("t_end must exceed t0, got [{t0}, {t_end}]")));
    }
    let k = ((t_end - t0) / dt).round().max(1.0) as usize;
    Ok((k, (t_end - t0) / k as f64))
}

fn saved_step(k: usize, total: usize, stride: usize) -> bool {
    k % stride.max(1) == 0 || k == total
}

/// Implicit Euler matrix `I - dt L` for the Chang–Cooper operator.
fn chang_cooper_matrix(grid: &Grid, pot: &Potential, pert: Option<&Perturbation>, dt: f64) -> Tridiagonal {
    let n = grid.len();
    let h = grid.spacing();
    let diff = 0.5;
    let u: Vec<f64> = grid.nodes().map(|x| total_potential(pot, pert, x)).collect();
    let w: Vec<f64> = (0..n - 1).map(|i| 2.0 * (u[i + 1] - u[i])).collect();
    let mut lower = vec![0.0; n];
    let mut diag = vec![1.0; n];
    let mut upper = vec![0.0; n];
    for i in 0..n {
        let vol = if i == 0 || i == n - 1 { 0.5 * h } else { h };
        let k = dt * diff / (h * vol);
        if i + 1 < n {
            upper[i] = -k * bernoulli(-w[i]);
            diag[i] += k * bernoulli(w[i]);
        }
        if i > 0 {
            lower[i] = -k * bernoulli(w[i - 1]);
            diag[i] += k * bernoulli(-w[i - 1]);
        }
    }
    Tridiagonal::factor(lower, &diag, &upper)
}

/// Solve the (perturbed) Fokker–Planck equation from `init` on `[t0, t_end]`.
pub fn solve_forward(
    pot: &Potential,
    init: &GridDensity,
    t0: f64,
    t_end: f64,
    opts: SolverOptions,
    pert: Option<&Perturbation>,
) -> Result<FlowSnapshotSeries> {
    let (steps, dt) = step_count(t0, t_end, opts.dt)?;
    let grid = *init.grid();
    let matrix = chang_cooper_matrix(&grid, pot, pert, dt);
    let mut p = init.values().to_vec();
    let mut times = vec![t0];
    let mut states = vec![init.clone()];
    for k in 1..=steps {
        matrix.solve_in_place(&mut p);
        for (node, v) in p.iter_mut().enumerate() {
            if *v < 0.0 {
                if *v < -1e-12 {
                    return Err(Error::DiscretizationFailure { step: k, node, value: *v });
                }
                *v = 0.0;
            }
        }
        if saved_step(k, steps, opts.save_stride) {
            times.push(t0 + k as f64 * dt);
            states.push(GridDensity::from_raw_unchecked(grid, p.clone()));
        }
    }
    Ok(FlowSnapshotSeries { times, states, potential: pot.clone(), perturbation: pert.copied() })
}

/// `ℓ = p e^{2Ψ}` at the nodes.
pub fn likelihood_ratio(d: &GridDensity, pot: &Potential) -> GridFunction {
    let values = d
        .grid()
        .nodes()
        .zip(d.values())
        .map(|(x, &p)| {
            let e = 2.0 * pot.evaluate(x);
            if p <= 0.0 {
                0.0
            } else if e < 600.0 {
                p * e.exp()
            } else {
                (p.ln() + e).exp()
            }
        })
        .collect();
    GridFunction { grid: *d.grid(), values }
}

/// Saved states of a likelihood-ratio evolution.
#[derive(Debug, Clone)]
pub struct LikelihoodSeries {
    pub times: Vec<f64>,
    pub values: Vec<GridFunction>,
}

/// Solve `∂t ℓ = ½ ℓ'' + (β - Ψ') ℓ' + (β' - 2βΨ') ℓ` with `ℓ' = 0` at the ends.
pub fn solve_backward_kolmogorov(
    pot: &Potential,
    ell0: &GridFunction,
    t0: f64,
    t_end: f64,
    opts: SolverOptions,
    pert: Option<&Perturbation>,
) -> Result<LikelihoodSeries> {
    let (steps, dt) = step_count(t0, t_end, opts.dt)?;
    let grid = ell0.grid;
    let n = grid.len();
    let h = grid.spacing();
    let mut lower = vec![0.0; n];
    let mut diag = vec![1.0; n];
    let mut upper = vec![0.0; n];
    for (i, x) in grid.nodes().enumerate() {
        let (beta, div_beta) = pert.map_or((0.0, 0.0), |b| {
            let f = b.fields(x);
            (f.beta, f.div_beta)
        });
        let drift = beta - pot.gradient(x);
        let react = div_beta - 2.0 * beta * pot.gradient(x);
        let d2 = 0.5 / (h * h);
        diag[i] += dt * (2.0 * d2 - react);
        if i == 0 {
            upper[i] = -dt * 2.0 * d2;
        } else if i == n - 1 {
            lower[i] = -dt * 2.0 * d2;
        } else {
            lower[i] = -dt * (d2 - drift / (2.0 * h));
            upper[i] = -dt * (d2 + drift / (2.0 * h));
        }
    }
    let matrix = Tridiagonal::factor(lower, &diag, &upper);
    let mut ell = ell0.values.clone();
    let mut times = vec![t0];
    let mut values = vec![ell0.clone()];
    for k in 1..=steps {
        matrix.solve_in_place(&mut ell);
        if let Some(node) = ell.iter().position(|v| !v.is_finite()) {
            return Err(Error::DiscretizationFailure { step: k, node, value: ell[node] });
        }
        if saved_step(k, steps, opts.save_stride) {
            times.push(t0 + k as f64 * dt);
            values.push(GridFunction { grid, values: ell.clone() });
        }
    }
    Ok(LikelihoodSeries { times, values })
}

/// Largest relative gap `|ℓ_p - ℓ| / ℓ` between the likelihood ratio built from
/// the forward flow and the one evolved by [`solve_backward_kolmogorov`], over
/// the central window `[tail, 1 - tail]` of each snapshot.
///
/// The gap is relative because `ℓ` grows like `e^{x²/4}` in the tails of a
/// wide initial law.
pub fn likelihood_cross_check(flow: &FlowSnapshotSeries, ells: &LikelihoodSeries, tail: f64) -> Result<f64> {
    if flow.times.len() != ells.times.len() || !flow.grid().same_as(&ells.values[0].grid) {
        return Err(Error::GridMismatch("flow and likelihood series are not aligned".into()));
    }
    let mut worst = 0.0f64;
    for (state, ell) in flow.states.iter().zip(&ells.values) {
        let via_p = likelihood_ratio(state, &flow.potential);
        for i in state.central_window(tail) {
            worst = worst.max((via_p.values[i] - ell.values[i]).abs() / ell.values[i].abs().max(DENSITY_FLOOR));
        }
    }
    Ok(worst)
}

/// Ratio `Y^β = p^β / p` between a perturbed and an unperturbed flow.
#[derive(Debug, Clone)]
pub struct RatioSeries {
    pub times: Vec<f64>,
    pub ratios: Vec<GridFunction>,
    /// `sup |Y^β(t) - 1| / (t - t0)` over the central window, for `t > t0`
    /// (0 at `t0`).
    pub linear_deviation: Vec<f64>,
}

pub fn perturbation_ratio(flow: &FlowSnapshotSeries, pflow: &FlowSnapshotSeries) -> Result<RatioSeries> {
    if !flow.grid().same_as(pflow.grid()) {
        return Err(Error::GridMismatch("flows live on different grids".into()));
    }
    if flow.times.len() != pflow.times.len()
        || flow.times.iter().zip(&pflow.times).any(|(a, b)| (a - b).abs() > 1e-9)
    {
        return Err(Error::GridMismatch("flows are saved at different times".into()));
    }
    let t0 = flow.t_start();
    let mut ratios = Vec::with_capacity(flow.len());
    let mut linear_deviation = Vec::with_capacity(flow.len());
    for ((t, p), pb) in flow.times.iter().zip(&flow.states).zip(&pflow.states) {
        let floor = DENSITY_FLOOR.max(1e-14 * p.values().iter().cloned().fold(0.0, f64::max));
        let y: Vec<f64> = p.values().iter().zip(pb.values()).map(|(a, b)| b / a.max(floor)).collect();
        let window = p.central_window(5e-3);
        let dev = if *t > t0 {
            window.map(|i| (y[i] - 1.0).abs()).fold(0.0, f64::max) / (t - t0)
        } else {
            0.0
        };
        ratios.push(GridFunction { grid: *p.grid(), values: y });
        linear_deviation.push(dev);
    }
    Ok(RatioSeries { times: flow.times.clone(), ratios, linear_deviation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{ou_marginal, GaussianState};

    fn grid() -> Grid {
        Grid::standard()
    }

    #[test]
    fn heat_flow_variance() {
        let init = GridDensity::gaussian(grid(), 0.0, 1.0).unwrap();
        let flow = solve_forward(&Potential::Zero, &init, 0.0, 0.5, SolverOptions::new(1e-4, 1000), None).unwrap();
        let last = flow.states.last().unwrap();
        assert!((last.variance() - 1.5).abs() < 0.01, "{}", last.variance());
        assert!((flow.t_end() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ou_flow_moments() {
        let init = GridDensity::gaussian(grid(), 1.0, 2.0).unwrap();
        let t = 4f64.ln();
        let flow =
            solve_forward(&Potential::ornstein_uhlenbeck(), &init, 0.0, t, SolverOptions::new(1e-4, 100_000), None)
                .unwrap();
        let last = flow.states.last().unwrap();
        let exact = ou_marginal(GaussianState::new(1.0, 2.0).unwrap(), t);
        assert!((last.mean() - exact.mean).abs() < 0.005, "{}", last.mean());
        assert!((last.variance() - exact.var).abs() < 0.01, "{}", last.variance());
    }

    #[test]
    fn gibbs_is_stationary() {
        let pot = Potential::ornstein_uhlenbeck();
        let init = GridDensity::from_fn(grid(), |x| pot.gibbs_density(x)).unwrap();
        let flow = solve_forward(&pot, &init, 0.0, 0.5, SolverOptions::new(1e-3, 50), None).unwrap();
        for s in &flow.states {
            let sup = s.values().iter().zip(init.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(sup < 1e-6, "{sup}");
        }
    }

    #[test]
    fn mass_and_positivity_conserved() {
        let pot = Potential::double_well(1.0).unwrap();
        let init = GridDensity::gaussian(grid(), 0.3, 0.25).unwrap();
        let flow = solve_forward(&pot, &init, 0.0, 0.1, SolverOptions::new(1e-4, 100), None).unwrap();
        for s in &flow.states {
            assert!((s.mass() - 1.0).abs() < 1e-9);
            assert!(s.values().iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn rejects_bad_horizon() {
        let init = GridDensity::gaussian(grid(), 0.0, 1.0).unwrap();
        assert!(solve_forward(&Potential::Zero, &init, 1.0, 0.5, SolverOptions::default(), None).is_err());
        assert!(solve_forward(&Potential::Zero, &init, 0.0, 0.5, SolverOptions::new(0.0, 1), None).is_err());
    }

    #[test]
    fn likelihood_ratio_values() {
        let d = GridDensity::gaussian(grid(), 1.0, 2.0).unwrap();
        let l = likelihood_ratio(&d, &Potential::Zero);
        assert_eq!(l.values, d.values());
        let pot = Potential::ornstein_uhlenbeck();
        let gibbs = GridDensity::from_fn(grid(), |x| pot.gibbs_density(x)).unwrap();
        let l = likelihood_ratio(&gibbs, &pot);
        let c = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!(l.values.iter().all(|v| (v - c).abs() < 1e-8));
        let l = likelihood_ratio(&d, &pot);
        let pdf0 = (-0.25f64).exp() / (4.0 * std::f64::consts::PI).sqrt();
        assert!((l.interpolate(0.0) - pdf0).abs() < 1e-4);
        assert!((pdf0 - 0.21970).abs() < 1e-5);
    }

    #[test]
    fn backward_kolmogorov_constants() {
        let ell0 = GridFunction::from_fn(grid(), |_| 3.0);
        let s = solve_backward_kolmogorov(&Potential::ornstein_uhlenbeck(), &ell0, 0.0, 0.2, SolverOptions::new(1e-3, 10), None)
            .unwrap();
        for v in &s.values {
            assert!(v.values.iter().all(|x| (x - 3.0).abs() < 1e-12));
        }
    }

    #[test]
    fn backward_kolmogorov_agrees_with_forward() {
        let pot = Potential::ornstein_uhlenbeck();
        let init = GridDensity::gaussian(grid(), 1.0, 2.0).unwrap();
        let opts = SolverOptions::new(1e-4, 1000);
        let flow = solve_forward(&pot, &init, 0.0, 0.5, opts, None).unwrap();
        let ells = solve_backward_kolmogorov(&pot, &likelihood_ratio(&init, &pot), 0.0, 0.5, opts, None).unwrap();
        let gap = likelihood_cross_check(&flow, &ells, 1e-3).unwrap();
        assert!(gap < 1e-3, "{gap}");
        // absolute agreement where ℓ is O(1)
        let last = flow.states.last().unwrap();
        let sup = likelihood_ratio(last, &pot).sup_distance(ells.values.last().unwrap(), last.central_window(0.05));
        assert!(sup < 1e-3, "{sup}");
    }

    #[test]
    fn perturbed_backward_kolmogorov_agrees_with_forward() {
        let pot = Potential::ornstein_uhlenbeck();
        let pert = Perturbation::new(0.0, 1.0, 0.2).unwrap();
        let init = GridDensity::gaussian(grid(), 1.0, 2.0).unwrap();
        let opts = SolverOptions::new(1e-4, 1000);
        let flow = solve_forward(&pot, &init, 0.0, 0.3, opts, Some(&pert)).unwrap();
        let ells =
            solve_backward_kolmogorov(&pot, &likelihood_ratio(&init, &pot), 0.0, 0.3, opts, Some(&pert)).unwrap();
        let gap = likelihood_cross_check(&flow, &ells, 1e-3).unwrap();
        assert!(gap < 1e-3, "{gap}");
        let zero = Perturbation::new(0.0, 1.0, 0.0).unwrap();
        let a = solve_backward_kolmogorov(&pot, &likelihood_ratio(&init, &pot), 0.0, 0.05, opts, Some(&zero)).unwrap();
        let b = solve_backward_kolmogorov(&pot, &likelihood_ratio(&init, &pot), 0.0, 0.05, opts, None).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn perturbation_ratio_scaling() {
        let pot = Potential::ornstein_uhlenbeck();
        let init = GridDensity::gaussian(grid(), 1.0, 2.0).unwrap();
        let opts = SolverOptions::new(1e-4, 10);
        let flow = solve_forward(&pot, &init, 0.0, 0.04, opts, None).unwrap();
        let zero = Perturbation::new(0.0, 1.0, 0.0).unwrap();
        let same = solve_forward(&pot, &init, 0.0, 0.04, opts, Some(&zero)).unwrap();
        let r = perturbation_ratio(&flow, &same).unwrap();
        assert!(r.ratios.iter().all(|y| y.values.iter().all(|v| (v - 1.0).abs() < 1e-12)));

        let pert = Perturbation::new(0.0, 1.0, 0.2).unwrap();
        let pflow = solve_forward(&pot, &init, 0.0, 0.04, opts, Some(&pert)).unwrap();
        let r = perturbation_ratio(&flow, &pflow).unwrap();
        assert!(r.ratios[0].values.iter().all(|v| (v - 1.0).abs() < 1e-15));
        // |Y - 1| / (t - t0) stays bounded and tends to sup |β' + β ∇log p(t0)|
        let score = init.score(crate::measure::RELATIVE_CLIP);
        let limit = init
            .central_window(5e-3)
            .map(|i| {
                let f = pert.fields(init.grid().node(i));
                (f.div_beta + f.beta * score.values[i]).abs()
            })
            .fold(0.0, f64::max);
        let at = |t: f64| r.linear_deviation[flow.index_of(t).unwrap()];
        assert!((at(0.001) - limit).abs() / limit < 0.15, "{} vs {limit}", at(0.001));
        let devs: Vec<f64> = [0.01, 0.02, 0.04].iter().map(|&t| at(t)).collect();
        assert!(devs.iter().all(|&d| d > 0.0 && d <= 1.05 * limit), "{devs:?}");
        assert!(devs[0] / devs[2] < 2.0, "{devs:?}");
    }

    #[test]
    fn snapshot_dir_round_trip() {
        let pot = Potential::ornstein_uhlenbeck();
        let g = Grid::new(-6.0, 6.0, 121).unwrap();
        let init = GridDensity::gaussian(g, 1.0, 2.0).unwrap();
        let flow = solve_forward(&pot, &init, 0.0, 0.1, SolverOptions::new(1e-2, 5), None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        flow.write_dir(dir.path()).unwrap();
        let back = FlowSnapshotSeries::read_dir(dir.path(), pot, None).unwrap();
        assert_eq!(back.times, flow.times);
        assert_eq!(back.len(), 3);
    }
}

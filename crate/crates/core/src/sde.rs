//! Monte Carlo simulation of the Langevin diffusion
//! `dX = -(Ψ'(X) + β(X)) dt + dW`, and of its time reversal.
//!
//! Path `i` draws all of its randomness from `ChaCha8Rng::seed_from_u64(seed)`
//! on stream `i`, so ensembles are bitwise reproducible regardless of how
//! rayon schedules the paths.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::field::DensityField;
use crate::io::{fmt_f64, write_atomic};
use crate::measure::{quantile_with_nodes, Grid, GridDensity};
use crate::pde::FlowSnapshotSeries;
use crate::potential::{total_gradient, Perturbation, Potential};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Forward,
    Reversed,
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::Forward => "forward",
            Orientation::Reversed => "reversed",
        })
    }
}

/// Law of `X(t0)`.
#[derive(Debug, Clone)]
pub enum InitialLaw {
    Gaussian { mean: f64, var: f64 },
    PointMass(f64),
    /// Inverse-CDF sampling of a grid density.
    Grid(GridDensity),
}

impl InitialLaw {
    pub fn gaussian(mean: f64, var: f64) -> Result<Self> {
        if !(var > 0.0 && var.is_finite() && mean.is_finite()) {
            return Err(invalid(format!("gaussian initial law needs var > 0, got {var}")));
        }
        Ok(Self::Gaussian { mean, var })
    }

    fn sampler(&self) -> Sampler<'_> {
        match self {
            InitialLaw::Gaussian { mean, var } => Sampler::Gaussian(*mean, var.sqrt()),
            InitialLaw::PointMass(x) => Sampler::Point(*x),
            InitialLaw::Grid(d) => Sampler::Quantile(d, d.cdf_nodes()),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            InitialLaw::Gaussian { mean, var } => format!("gaussian(mean={mean},var={var})"),
            InitialLaw::PointMass(x) => format!("point({x})"),
            InitialLaw::Grid(d) => format!("grid(n={})", d.grid().len()),
        }
    }
}

enum Sampler<'a> {
    Gaussian(f64, f64),
    Point(f64),
    Quantile(&'a GridDensity, Vec<f64>),
}

impl Sampler<'_> {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Gaussian(m, s) => m + s * rng.sample::<f64, _>(StandardNormal),
            Sampler::Point(x) => *x,
            Sampler::Quantile(d, c) => quantile_with_nodes(d.grid(), d.values(), c, rng.random::<f64>()),
        }
    }
}

/// Time grid, ensemble size and seed of a simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
    pub m_paths: usize,
    pub seed: u64,
    /// Keep every `record_stride`-th step (the final step is always kept).
    pub record_stride: usize,
}

impl SimulationOptions {
    pub fn new(t_end: f64, dt: f64, m_paths: usize, seed: u64) -> Self {
        Self { t0: 0.0, t_end, dt, m_paths, seed, record_stride: 10 }
    }

    pub fn with_record_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn with_t0(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 1e-2) {
            return Err(invalid(format!("dt must lie in (0, 1e-2], got {}", self.dt)));
        }
        if self.m_paths == 0 {
            return Err(invalid("m_paths must be positive"));
        }
        if self.record_stride == 0 {
            return Err(invalid("record_stride must be positive"));
        }
        if !(self.t_end >= self.t0) || !self.t0.is_finite() || !self.t_end.is_finite() {
            return Err(invalid(format!("need t0 <= t_end, got [{}, {}]", self.t0, self.t_end)));
        }
        Ok(())
    }

    /// Number of steps and the step actually used.
    fn steps(&self) -> (usize, f64) {
        let span = self.t_end - self.t0;
        if span == 0.0 {
            return (0, self.dt);
        }
        let k = (span / self.dt).round().max(1.0) as usize;
        (k, span / k as f64)
    }

    fn recorded_steps(&self, steps: usize) -> Vec<usize> {
        (0..=steps).filter(|k| k % self.record_stride == 0 || *k == steps).collect()
    }
}

/// A set of simulated trajectories recorded on a shared time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    /// The ensemble's own clock: forward time `t`, or reversed time `s`.
    pub times: Vec<f64>,
    /// Row-major `m_paths × times.len()`.
    pub states: Vec<f64>,
    pub m_paths: usize,
    pub dt: f64,
    pub record_stride: usize,
    pub orientation: Orientation,
    pub seed: u64,
    /// Forward-time horizon `[t0, T]`; reversed time is `s = T - t`.
    pub horizon: (f64, f64),
    pub potential: String,
    pub perturbation: Option<String>,
    /// Running integrals `∫_{t0}^{t} g(u, X(u)) du` of an optional
    /// two-component integrand, accumulated on the simulation step with the
    /// right-endpoint rule, in the same layout as `states`.
    pub integral: Option<Vec<[f64; 2]>>,
}

impl PathEnsemble {
    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let r = self.n_times();
        &self.states[i * r..(i + 1) * r]
    }

    pub fn value(&self, i: usize, k: usize) -> f64 {
        self.states[i * self.n_times() + k]
    }

    /// States of all paths at record `k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.m_paths).map(|i| self.value(i, k)).collect()
    }

    /// Record index of clock value `t` (within 1e-9).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = self.times.partition_point(|&s| s < t - 1e-9);
        if k < self.times.len() && (self.times[k] - t).abs() <= 1e-9 {
            Ok(k)
        } else {
            Err(Error::OutOfRange { t, start: self.times[0], end: *self.times.last().unwrap() })
        }
    }

    /// The first `count` paths (all of them if there are fewer), without the integral channel.
    pub fn head(&self, count: usize) -> PathEnsemble {
        let keep = count.min(self.m_paths);
        PathEnsemble {
            times: self.times.clone(),
            states: self.states[..keep * self.n_times()].to_vec(),
            m_paths: keep,
            dt: self.dt,
            record_stride: self.record_stride,
            orientation: self.orientation,
            seed: self.seed,
            horizon: self.horizon,
            potential: self.potential.clone(),
            perturbation: self.perturbation.clone(),
            integral: None,
        }
    }

    /// Forward time of record `k`.
    pub fn forward_time(&self, k: usize) -> f64 {
        match self.orientation {
            Orientation::Forward => self.times[k],
            Orientation::Reversed => self.horizon.1 - self.times[k],
        }
    }

    pub fn mean(&self, k: usize) -> f64 {
        self.column(k).iter().sum::<f64>() / self.m_paths as f64
    }

    pub fn second_moment(&self, k: usize) -> f64 {
        self.column(k).iter().map(|x| x * x).sum::<f64>() / self.m_paths as f64
    }

    /// Unbiased sample variance at record `k`.
    pub fn variance(&self, k: usize) -> f64 {
        let col = self.column(k);
        let m = col.len() as f64;
        let mean = col.iter().sum::<f64>() / m;
        col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0)
    }

    /// Kernel density estimate of the marginal at record `k`.
    pub fn marginal_density(&self, k: usize, grid: Grid) -> Result<GridDensity> {
        GridDensity::from_samples(&self.column(k), grid)
    }

    fn metadata(&self) -> String {
        let mut s = format!(
            "# seed={}; dt={}; record_stride={}; orientation={}; t0={}; t_end={}; m_paths={}; potential={}",
            self.seed,
            fmt_f64(self.dt),
            self.record_stride,
            self.orientation,
            fmt_f64(self.horizon.0),
            fmt_f64(self.horizon.1),
            self.m_paths,
            self.potential
        );
        if let Some(p) = &self.perturbation {
            let _ = write!(s, "; perturbation={p}");
        }
        s
    }

    /// One row per path after a metadata comment line and a header of times.
    pub fn to_csv_string(&self) -> String {
        let mut s = self.metadata();
        s.push('\n');
        s.push_str("path");
        for t in &self.times {
            s.push(',');
            s.push_str(&fmt_f64(*t));
        }
        s.push('\n');
        for i in 0..self.m_paths {
            let _ = write!(s, "{i}");
            for x in self.path(i) {
                s.push(',');
                s.push_str(&fmt_f64(*x));
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv_string().as_bytes())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let err = |message: String| Error::Parse { path: path.to_path_buf(), message };
        let mut lines = text.lines();
        let meta = lines.next().and_then(|l| l.strip_prefix("# ")).ok_or_else(|| err("missing metadata line".into()))?;
        let mut get = std::collections::HashMap::new();
        for part in meta.split("; ") {
            if let Some((k, v)) = part.split_once('=') {
                get.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let field = |k: &str| get.get(k).cloned().ok_or_else(|| err(format!("metadata lacks `{k}`")));
        let num = |k: &str| -> Result<f64> { field(k)?.parse().map_err(|e| err(format!("{k}: {e}"))) };
        let int = |k: &str| -> Result<u64> { field(k)?.parse().map_err(|e| err(format!("{k}: {e}"))) };
        let orientation = match field("orientation")?.as_str() {
            "forward" => Orientation::Forward,
            "reversed" => Orientation::Reversed,
            o => return Err(err(format!("unknown orientation `{o}`"))),
        };
        let header = lines.next().ok_or_else(|| err("missing header".into()))?;
        let mut cols = header.split(',');
        if cols.next() != Some("path") {
            return Err(err("header must start with `path`".into()));
        }
        let times = cols
            .map(|c| c.trim().parse::<f64>().map_err(|e| err(format!("time `{c}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut states = Vec::new();
        let mut m = 0;
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let vals: Vec<&str> = line.split(',').skip(1).collect();
            if vals.len() != times.len() {
                return Err(err(format!("row {m} has {} values, expected {}", vals.len(), times.len())));
            }
            for v in vals {
                states.push(v.trim().parse::<f64>().map_err(|e| err(format!("row {m}: {e}")))?);
            }
            m += 1;
        }
        Ok(Self {
            times,
            states,
            m_paths: m,
            dt: num("dt")?,
            record_stride: int("record_stride")? as usize,
            orientation,
            seed: int("seed")?,
            horizon: (num("t0")?, num("t_end")?),
            potential: field("potential")?,
            perturbation: get.get("perturbation").cloned(),
            integral: None,
        })
    }
}

type PathOutput = (Vec<f64>, Vec<[f64; 2]>);

/// Euler–Maruyama driver shared by the forward and reversed simulators.
/// `drift(k, x)` is the drift at step `k`; `integrand(k, x)` is integrated
/// with the value at the end of each step.
fn run_paths<S, D, G>(
    opts: &SimulationOptions,
    start: S,
    drift: D,
    integrand: Option<G>,
) -> Result<(Vec<f64>, Option<Vec<[f64; 2]>>)>
where
    S: Fn(&mut ChaCha8Rng) -> f64 + Sync,
    D: Fn(usize, f64) -> Result<f64> + Sync,
    G: Fn(usize, f64) -> Result<[f64; 2]> + Sync,
{
    let (steps, dt) = opts.steps();
    let sqrt_dt = dt.sqrt();
    let rec = opts.recorded_steps(steps);
    let per_path: Vec<PathOutput> = (0..opts.m_paths)
        .into_par_iter()
        .map(|i| -> Result<PathOutput> {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(i as u64);
            let mut x = start(&mut rng);
            let mut acc = [0.0; 2];
            let mut xs = Vec::with_capacity(rec.len());
            let mut gs = Vec::with_capacity(if integrand.is_some() { rec.len() } else { 0 });
            let mut next = 0;
            for k in 0..=steps {
                if next < rec.len() && rec[next] == k {
                    xs.push(x);
                    if integrand.is_some() {
                        gs.push(acc);
                    }
                    next += 1;
                }
                if k == steps {
                    break;
                }
                let z: f64 = rng.sample(StandardNormal);
                x += drift(k, x)? * dt + sqrt_dt * z;
                if let Some(g) = &integrand {
                    let v = g(k + 1, x)?;
                    acc[0] += v[0] * dt;
                    acc[1] += v[1] * dt;
                }
            }
            Ok((xs, gs))
        })
        .collect::<Result<_>>()?;
    let mut states = Vec::with_capacity(opts.m_paths * rec.len());
    let mut integral = integrand.as_ref().map(|_| Vec::with_capacity(opts.m_paths * rec.len()));
    for (xs, gs) in per_path {
        states.extend(xs);
        if let Some(v) = integral.as_mut() {
            v.extend(gs);
        }
    }
    Ok((states, integral))
}

fn record_times(opts: &SimulationOptions, origin: f64) -> Vec<f64> {
    let (steps, dt) = opts.steps();
    opts.recorded_steps(steps).into_iter().map(|k| origin + k as f64 * dt).collect()
}

/// Forward Euler–Maruyama simulation of `dX = -(Ψ' + β)(X) dt + dW`.
pub fn simulate_forward(
    pot: &Potential,
    init: &InitialLaw,
    opts: SimulationOptions,
    pert: Option<&Perturbation>,
) -> Result<PathEnsemble> {
    simulate_forward_accumulating(pot, init, opts, pert, None::<fn(f64, f64) -> Result<[f64; 2]>>)
}

/// As [`simulate_forward`], additionally accumulating `∫ g(t, X(t)) dt` along
/// every path on the simulation step (stored in [`PathEnsemble::integral`]).
pub fn simulate_forward_accumulating<G>(
    pot: &Potential,
    init: &InitialLaw,
    opts: SimulationOptions,
    pert: Option<&Perturbation>,
    integrand: Option<G>,
) -> Result<PathEnsemble>
where
    G: Fn(f64, f64) -> Result<[f64; 2]> + Sync,
{
    opts.validate()?;
    let sampler = init.sampler();
    let (_, dt) = opts.steps();
    let t0 = opts.t0;
    let (states, integral) = run_paths(
        &opts,
        |rng| sampler.draw(rng),
        |_, x| Ok(-total_gradient(pot, pert, x)),
        integrand.map(|g| move |k: usize, x: f64| g(t0 + k as f64 * dt, x)),
    )?;
    Ok(PathEnsemble {
        times: record_times(&opts, opts.t0),
        states,
        m_paths: opts.m_paths,
        dt,
        record_stride: opts.record_stride,
        orientation: Orientation::Forward,
        seed: opts.seed,
        horizon: (opts.t0, opts.t_end),
        potential: pot.describe(),
        perturbation: pert.map(|b| b.describe()),
        integral,
    })
}

/// Drift `∇log p + Ψ' + β` of the time-reversed diffusion at forward time `t`.
pub fn reversed_drift(field: &DensityField, t: f64, x: f64) -> Result<f64> {
    field.reversed_drift(t, x)
}

/// Euler–Maruyama simulation of the time-reversed diffusion
/// `dX̂ = (∇log p + Ψ' + β)(T - s, X̂) ds + dW̄`, started from `p(T)`.
///
/// `opts.t0` and `opts.t_end` are ignored; the horizon is the flow's.
pub fn simulate_reversed(flow: &FlowSnapshotSeries, opts: SimulationOptions) -> Result<PathEnsemble> {
    let (t0, t_end) = (flow.t_start(), flow.t_end());
    let opts = SimulationOptions { t0: 0.0, t_end: t_end - t0, ..opts };
    opts.validate()?;
    let field = DensityField::new(flow);
    let last = flow.states.last().unwrap();
    let cdf = last.cdf_nodes();
    let (_, ds) = opts.steps();
    let (states, _) = run_paths(
        &opts,
        |rng| quantile_with_nodes(last.grid(), last.values(), &cdf, rng.random::<f64>()),
        |k, x| field.reversed_drift((t_end - k as f64 * ds).max(t0), x),
        None::<fn(usize, f64) -> Result<[f64; 2]>>,
    )?;
    Ok(PathEnsemble {
        times: record_times(&opts, 0.0),
        states,
        m_paths: opts.m_paths,
        dt: ds,
        record_stride: opts.record_stride,
        orientation: Orientation::Reversed,
        seed: opts.seed,
        horizon: (t0, t_end),
        potential: flow.potential.describe(),
        perturbation: flow.perturbation.map(|b| b.describe()),
        integral: None,
    })
}

/// Caps the global rayon pool at `OTTO_THREADS` workers when the variable is set.
pub fn configure_threads_from_env() -> Result<()> {
    let Ok(raw) = std::env::var("OTTO_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config { key: "OTTO_THREADS".into(), message: format!("expected a positive integer, got `{raw}`") })?;
    // A pool that was already initialised keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{ou_marginal, GaussianState};
    use crate::pde::{solve_forward, SolverOptions};

    #[test]
    fn ou_mean_in_clt_band() {
        let t = 4f64.ln();
        let opts = SimulationOptions::new(t, 1e-3, 100_000, 11).with_record_stride(10_000);
        let ens = simulate_forward(&Potential::ornstein_uhlenbeck(), &InitialLaw::gaussian(1.0, 2.0).unwrap(), opts, None)
            .unwrap();
        let k = ens.n_times() - 1;
        assert!((ens.times[k] - t).abs() < 1e-12);
        let band = 3.0 * 1.25f64.sqrt() / 1e5f64.sqrt();
        assert!((ens.mean(k) - 0.5).abs() < band, "{}", ens.mean(k));
        let exact = ou_marginal(GaussianState::new(1.0, 2.0).unwrap(), t);
        assert!((ens.variance(k) - exact.var).abs() < 0.02);
    }

    #[test]
    fn brownian_variance() {
        let opts = SimulationOptions::new(1.0, 1e-2, 100_000, 3).with_record_stride(100);
        let ens = simulate_forward(&Potential::Zero, &InitialLaw::PointMass(0.0), opts, None).unwrap();
        assert_eq!(ens.n_times(), 2);
        assert!((ens.variance(1) - 1.0).abs() < 0.015, "{}", ens.variance(1));
        assert!(ens.column(0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn deterministic_across_runs_and_thread_counts() {
        let pot = Potential::double_well(1.0).unwrap();
        let init = InitialLaw::gaussian(0.0, 0.25).unwrap();
        let opts = SimulationOptions::new(0.2, 1e-3, 500, 42);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_forward(&pot, &init, opts, None).unwrap())
        };
        let a = run(1);
        assert_eq!(a, run(3));
        assert_eq!(a, simulate_forward(&pot, &init, opts, None).unwrap());
        let other = simulate_forward(&pot, &init, SimulationOptions { seed: 43, ..opts }, None).unwrap();
        assert_ne!(a.states, other.states);
    }

    #[test]
    fn zero_amplitude_matches_unperturbed() {
        let pot = Potential::ornstein_uhlenbeck();
        let init = InitialLaw::gaussian(1.0, 2.0).unwrap();
        let opts = SimulationOptions::new(0.5, 1e-3, 200, 5);
        let zero = Perturbation::new(0.0, 1.0, 0.0).unwrap();
        let a = simulate_forward(&pot, &init, opts, None).unwrap();
        let b = simulate_forward(&pot, &init, opts, Some(&zero)).unwrap();
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn rejects_bad_options() {
        let pot = Potential::Zero;
        let init = InitialLaw::PointMass(0.0);
        assert!(simulate_forward(&pot, &init, SimulationOptions::new(1.0, 0.05, 10, 0), None).is_err());
        assert!(simulate_forward(&pot, &init, SimulationOptions::new(1.0, 1e-3, 0, 0), None).is_err());
        assert!(simulate_forward(&pot, &init, SimulationOptions::new(1.0, 1e-3, 10, 0).with_t0(2.0), None).is_err());
        assert!(InitialLaw::gaussian(0.0, 0.0).is_err());
    }

    #[test]
    fn forward_marginals_match_pde() {
        let pot = Potential::ornstein_uhlenbeck();
        let grid = Grid::standard();
        let init = GridDensity::gaussian(grid, 1.0, 2.0).unwrap();
        let flow = solve_forward(&pot, &init, 0.0, 1.0, SolverOptions::new(1e-4, 2500), None).unwrap();
        let opts = SimulationOptions::new(1.0, 1e-3, 100_000, 17).with_record_stride(250);
        let ens = simulate_forward(&pot, &InitialLaw::Grid(init), opts, None).unwrap();
        for (k, t) in ens.times.iter().enumerate() {
            let kde = ens.marginal_density(k, grid).unwrap();
            let l1 = kde.l1_distance(flow.state_at(*t).unwrap()).unwrap();
            assert!(l1 < 0.03, "t={t} L1={l1}");
        }
    }

    #[test]
    fn second_moment_stays_bounded() {
        let cases = [
            (Potential::ornstein_uhlenbeck(), InitialLaw::gaussian(1.0, 2.0).unwrap()),
            (Potential::double_well(1.0).unwrap(), InitialLaw::gaussian(0.0, 0.25).unwrap()),
            (Potential::Zero, InitialLaw::gaussian(0.0, 1.0).unwrap()),
        ];
        for (pot, init) in cases {
            let opts = SimulationOptions::new(4.0, 1e-2, 5_000, 9);
            let ens = simulate_forward(&pot, &init, opts, None).unwrap();
            let m0 = ens.second_moment(0);
            let worst = (0..ens.n_times()).map(|k| ens.second_moment(k)).fold(0.0, f64::max);
            assert!(worst <= 10.0 * (1.0 + m0), "{} {worst}", pot.describe());
        }
    }

    #[test]
    fn reversal_recovers_initial_law() {
        let pot = Potential::ornstein_uhlenbeck();
        let grid = Grid::standard();
        let init = GridDensity::gaussian(grid, 1.0, 2.0).unwrap();
        let flow = solve_forward(&pot, &init, 0.0, 1.0, SolverOptions::new(1e-4, 100), None).unwrap();
        let rev = simulate_reversed(&flow, SimulationOptions::new(0.0, 1e-3, 100_000, 23).with_record_stride(250)).unwrap();
        assert_eq!(rev.orientation, Orientation::Reversed);
        let k = rev.n_times() - 1;
        assert!((rev.forward_time(k)).abs() < 1e-12);
        assert!((rev.mean(k) - 1.0).abs() < 0.02, "{}", rev.mean(k));
        assert!((rev.variance(k) - 2.0).abs() < 0.05, "{}", rev.variance(k));
        for k in 0..rev.n_times() {
            let t = rev.forward_time(k);
            let l1 = rev.marginal_density(k, grid).unwrap().l1_distance(flow.state_at(t).unwrap()).unwrap();
            assert!(l1 < 0.05, "t={t} L1={l1}");
        }
    }

    #[test]
    fn zero_horizon_reversal_returns_initial_draws() {
        let pot = Potential::ornstein_uhlenbeck();
        let init = GridDensity::gaussian(Grid::standard(), 1.0, 2.0).unwrap();
        let flow = FlowSnapshotSeries { times: vec![0.0], states: vec![init], potential: pot, perturbation: None };
        let rev = simulate_reversed(&flow, SimulationOptions::new(0.0, 1e-3, 1000, 1)).unwrap();
        assert_eq!(rev.n_times(), 1);
        let again = simulate_reversed(&flow, SimulationOptions::new(0.0, 1e-3, 1000, 1)).unwrap();
        assert_eq!(rev.states, again.states);
        assert!((rev.mean(0) - 1.0).abs() < 0.15);
    }

    #[test]
    fn accumulated_integral_of_constant() {
        let opts = SimulationOptions::new(0.5, 1e-3, 10, 2).with_record_stride(100);
        let ens = simulate_forward_accumulating(
            &Potential::Zero,
            &InitialLaw::PointMass(0.0),
            opts,
            None,
            Some(|_t: f64, _x: f64| Ok([2.0, -1.0])),
        )
        .unwrap();
        let g = ens.integral.as_ref().unwrap();
        for i in 0..ens.m_paths {
            for (k, t) in ens.times.iter().enumerate() {
                let v = g[i * ens.n_times() + k];
                assert!((v[0] - 2.0 * t).abs() < 1e-12 && (v[1] + t).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let pert = Perturbation::new(0.0, 1.0, 0.2).unwrap();
        let opts = SimulationOptions::new(0.1, 1e-2, 7, 99).with_record_stride(3);
        let ens = simulate_forward(&Potential::ornstein_uhlenbeck(), &InitialLaw::gaussian(1.0, 2.0).unwrap(), opts, Some(&pert))
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("paths.csv");
        ens.write_csv(&p).unwrap();
        let back = PathEnsemble::read_csv(&p).unwrap();
        assert_eq!(back, ens);
        assert!(ens.to_csv_string().starts_with("# seed=99;"));
    }
}

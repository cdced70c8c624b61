//! Trajectorial processes along simulated paths and statistical tests of
//! their martingale structure in the backwards filtration.
//!
//! For a forward ensemble on `[t0, T]` and reversed time `s = T - t`:
//!
//! * `F(T-s) = ∫₀ˢ ½|∇log ℓ|²(T-u, X(T-u)) du` (plus `(2βΨ' - β')` under a
//!   perturbation),
//! * `M(T-s) = log ℓ(T-s, X(T-s)) - log ℓ(T, X(T)) - F(T-s)`.
//!
//! Reversed-time integrals use the left endpoint in `s`, i.e. the later
//! forward time of every step.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::field::DensityField;
use crate::functionals::{require_probability_reference, FlowDiagnostics};
use crate::io::{fmt_f64, write_atomic};
use crate::measure::{central_difference, silverman_bandwidth, Grid, GridDensity, GridFunction, RELATIVE_CLIP};
use crate::pde::FlowSnapshotSeries;
use crate::potential::{Perturbation, Potential};
use crate::sde::{simulate_forward, simulate_forward_accumulating, InitialLaw, Orientation, PathEnsemble, SimulationOptions};

/// Test functions `φ` for conditioning on the current state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestFunction {
    One,
    X,
    X2,
    GaussBump,
}

impl TestFunction {
    pub const ALL: [TestFunction; 4] = [TestFunction::One, TestFunction::X, TestFunction::X2, TestFunction::GaussBump];

    pub fn eval(self, x: f64) -> f64 {
        match self {
            TestFunction::One => 1.0,
            TestFunction::X => x,
            TestFunction::X2 => x * x,
            TestFunction::GaussBump => (-x * x).exp(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TestFunction::One => "1",
            TestFunction::X => "x",
            TestFunction::X2 => "x^2",
            TestFunction::GaussBump => "exp(-x^2)",
        }
    }
}

/// One line of a statistical report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub test: String,
    pub s1: f64,
    pub s2: f64,
    pub phi: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Statistics certifying (or refuting) martingale and identity claims.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MartingaleReport {
    pub rows: Vec<ReportRow>,
}

impl MartingaleReport {
    pub fn passed(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.pass)
    }

    pub fn extend(&mut self, other: MartingaleReport) {
        self.rows.extend(other.rows);
    }

    /// Largest `|statistic|` among rows of the given test.
    pub fn max_abs(&self, test: &str) -> f64 {
        self.rows.iter().filter(|r| r.test == test).map(|r| r.statistic.abs()).fold(0.0, f64::max)
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("test,s1,s2,phi,statistic,threshold,pass\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.test,
                fmt_f64(r.s1),
                fmt_f64(r.s2),
                r.phi,
                fmt_f64(r.statistic),
                fmt_f64(r.threshold),
                r.pass
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv_string().as_bytes())
    }

    fn push(&mut self, test: &str, s: (f64, f64), phi: &str, statistic: f64, threshold: f64, pass: bool) {
        self.rows.push(ReportRow {
            test: test.to_string(),
            s1: s.0,
            s2: s.1,
            phi: phi.to_string(),
            statistic,
            threshold,
            pass,
        });
    }
}

/// Mean and standard error with a fixed summation order.
fn mean_se(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0).max(1.0);
    (mean, (var / m).sqrt())
}

fn z_score(v: &[f64]) -> f64 {
    let (mean, se) = mean_se(v);
    if se > 0.0 {
        mean / se
    } else if mean == 0.0 {
        0.0
    } else {
        f64::INFINITY * mean.signum()
    }
}

/// Integrand of `F` (first entry) and of its perturbation correction
/// `2βΨ' - β'` (second entry) at `(t, x)`.
pub fn fisher_integrand(field: &DensityField, t: f64, x: f64) -> Result<[f64; 2]> {
    let a = field.grad_log_ell(t, x)?;
    let corr = field.perturbation().map_or(0.0, |b| {
        let f = b.fields(x);
        2.0 * f.beta * field.potential().gradient(x) - f.div_beta
    });
    Ok([0.5 * a * a, corr])
}

/// Forward simulation that also accumulates the two integrands of
/// [`fisher_integrand`] on the simulation step, so that `F` is resolved at
/// the step `dt` rather than at the record stride.
pub fn simulate_with_fisher(
    flow: &FlowSnapshotSeries,
    init: &InitialLaw,
    opts: SimulationOptions,
) -> Result<PathEnsemble> {
    let field = DensityField::new(flow);
    let opts = SimulationOptions { t0: flow.t_start(), t_end: flow.t_end(), ..opts };
    simulate_forward_accumulating(
        &flow.potential,
        init,
        opts,
        flow.perturbation.as_ref(),
        Some(|t: f64, x: f64| fisher_integrand(&field, t, x)),
    )
}

/// Per-path trajectorial processes tabulated in reversed time.
#[derive(Debug, Clone)]
pub struct TrajectorialProcesses {
    /// Reversed times `s_j = T - t`, increasing from 0.
    pub s: Vec<f64>,
    pub horizon: (f64, f64),
    pub m_paths: usize,
    /// `X(T - s_j)`, row-major `m_paths × s.len()`.
    pub x: Vec<f64>,
    /// `log ℓ(T - s_j, X(T - s_j))` (of the perturbed flow when perturbed).
    pub log_l: Vec<f64>,
    /// Fisher part `∫ ½|∇log ℓ|²` of `F`.
    pub f_fisher: Vec<f64>,
    /// Correction part `∫ (2βΨ' - β')` of `F^β` (zero when unperturbed).
    pub f_corr: Vec<f64>,
    pub perturbed: bool,
}

impl TrajectorialProcesses {
    pub fn n_times(&self) -> usize {
        self.s.len()
    }

    fn at(&self, v: &[f64], i: usize, j: usize) -> f64 {
        v[i * self.n_times() + j]
    }

    pub fn x_at(&self, i: usize, j: usize) -> f64 {
        self.at(&self.x, i, j)
    }

    pub fn log_l_at(&self, i: usize, j: usize) -> f64 {
        self.at(&self.log_l, i, j)
    }

    pub fn f_at(&self, i: usize, j: usize) -> f64 {
        self.at(&self.f_fisher, i, j) + self.at(&self.f_corr, i, j)
    }

    pub fn m_at(&self, i: usize, j: usize) -> f64 {
        self.log_l_at(i, j) - self.log_l_at(i, 0) - self.f_at(i, j)
    }

    /// Index of reversed time `s` on the record grid (nearest, within half a record).
    pub fn index_of_s(&self, s: f64) -> Result<usize> {
        let j = self.s.partition_point(|&v| v < s);
        let cands = [j.saturating_sub(1), j.min(self.s.len() - 1)];
        let best = cands.into_iter().min_by(|&a, &b| (self.s[a] - s).abs().total_cmp(&(self.s[b] - s).abs())).unwrap();
        let half = if self.s.len() > 1 { 0.5 * (self.s[1] - self.s[0]) + 1e-9 } else { 1e-9 };
        if (self.s[best] - s).abs() <= half {
            Ok(best)
        } else {
            Err(Error::OutOfRange { t: s, start: self.s[0], end: *self.s.last().unwrap() })
        }
    }

    /// Index of forward time `t`.
    pub fn index_of_t(&self, t: f64) -> Result<usize> {
        self.index_of_s(self.horizon.1 - t)
    }

    /// Largest `|log ℓ(T-s) - log ℓ(T) - (M + F)|` over all paths and times.
    pub fn decomposition_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.m_paths {
            for j in 0..self.n_times() {
                let lhs = self.log_l_at(i, j) - self.log_l_at(i, 0);
                worst = worst.max((lhs - (self.m_at(i, j) + self.f_at(i, j))).abs());
            }
        }
        worst
    }

    /// `E[F(t0)]`, the path average of `F` at the end of reversed time.
    pub fn mean_total_f(&self) -> f64 {
        let j = self.n_times() - 1;
        (0..self.m_paths).map(|i| self.f_at(i, j)).sum::<f64>() / self.m_paths as f64
    }

    /// `max_s E[M(T-s)²]`.
    pub fn max_second_moment_m(&self) -> f64 {
        (0..self.n_times())
            .map(|j| (0..self.m_paths).map(|i| self.m_at(i, j).powi(2)).sum::<f64>() / self.m_paths as f64)
            .fold(0.0, f64::max)
    }

    /// Negative control: the Fisher part of `F` multiplied by `factor`.
    pub fn with_scaled_fisher(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.f_fisher.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// Negative control: the perturbation correction of `F^β` with the wrong sign.
    pub fn with_flipped_correction(&self) -> Self {
        let mut out = self.clone();
        out.f_corr.iter_mut().for_each(|v| *v = -*v);
        out
    }
}

/// Tabulate `log ℓ`, `F` and `M` along a forward ensemble.
///
/// When the ensemble carries accumulated integrals (see
/// [`simulate_with_fisher`]) they define `F`; otherwise `F` is integrated on
/// the record grid with the left-endpoint rule in reversed time.
pub fn build_processes(
    paths: &PathEnsemble,
    flow: &FlowSnapshotSeries,
    pert: Option<&Perturbation>,
) -> Result<TrajectorialProcesses> {
    if paths.orientation != Orientation::Forward {
        return Err(invalid("trajectorial processes need a forward ensemble"));
    }
    let (t0, t_end) = paths.horizon;
    if (t0 - flow.t_start()).abs() > 1e-9 || (t_end - flow.t_end()).abs() > 1e-9 {
        return Err(Error::GridMismatch(format!(
            "paths cover [{t0}, {t_end}] but the flow covers [{}, {}]",
            flow.t_start(),
            flow.t_end()
        )));
    }
    if flow.perturbation.as_ref() != pert {
        return Err(invalid("flow and processes must use the same perturbation"));
    }
    let field = DensityField::new(flow);
    let r = paths.n_times();
    let s: Vec<f64> = (0..r).rev().map(|k| t_end - paths.times[k]).collect();
    let rows: Vec<[Vec<f64>; 4]> = (0..paths.m_paths)
        .into_par_iter()
        .map(|i| -> Result<[Vec<f64>; 4]> {
            let path = paths.path(i);
            let mut x = Vec::with_capacity(r);
            let mut log_l = Vec::with_capacity(r);
            let mut fish = Vec::with_capacity(r);
            let mut corr = Vec::with_capacity(r);
            for j in 0..r {
                let k = r - 1 - j;
                x.push(path[k]);
                log_l.push(field.log_ell(paths.times[k], path[k])?);
            }
            match &paths.integral {
                Some(g) => {
                    let row = &g[i * r..(i + 1) * r];
                    let last = row[r - 1];
                    for j in 0..r {
                        let k = r - 1 - j;
                        fish.push(last[0] - row[k][0]);
                        corr.push(last[1] - row[k][1]);
                    }
                }
                None => {
                    let (mut a, mut b) = (0.0, 0.0);
                    fish.push(0.0);
                    corr.push(0.0);
                    for j in 1..r {
                        let k = r - j;
                        let g = fisher_integrand(&field, paths.times[k], path[k])?;
                        let ds = s[j] - s[j - 1];
                        a += g[0] * ds;
                        b += g[1] * ds;
                        fish.push(a);
                        corr.push(b);
                    }
                }
            }
            Ok([x, log_l, fish, corr])
        })
        .collect::<Result<_>>()?;
    let mut tp = TrajectorialProcesses {
        s,
        horizon: (t0, t_end),
        m_paths: paths.m_paths,
        x: Vec::with_capacity(paths.m_paths * r),
        log_l: Vec::with_capacity(paths.m_paths * r),
        f_fisher: Vec::with_capacity(paths.m_paths * r),
        f_corr: Vec::with_capacity(paths.m_paths * r),
        perturbed: pert.is_some(),
    };
    for [x, l, f, c] in rows {
        tp.x.extend(x);
        tp.log_l.extend(l);
        tp.f_fisher.extend(f);
        tp.f_corr.extend(c);
    }
    Ok(tp)
}

/// Default reversed-time checkpoints: `{0, ¼, ½, ¾}` of the horizon and a
/// last one 0.05 before `t0`.
pub fn default_s_pairs(horizon: (f64, f64)) -> Vec<(f64, f64)> {
    let span = horizon.1 - horizon.0;
    let cuts = [0.0, 0.25 * span, 0.5 * span, 0.75 * span, (span - 0.05).max(0.8 * span)];
    cuts.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Z statistics of `E[(M(T-s₂) - M(T-s₁)) φ(X(T-s₁))] = 0`; pass if every `|Z| < 4`.
pub fn martingale_zero_drift_test(
    tp: &TrajectorialProcesses,
    s_pairs: &[(f64, f64)],
    test_functions: &[TestFunction],
) -> Result<MartingaleReport> {
    let mut report = MartingaleReport::default();
    for &(s1, s2) in s_pairs {
        if !(s2 > s1) {
            return Err(invalid(format!("need s1 < s2, got ({s1}, {s2})")));
        }
        let (j1, j2) = (tp.index_of_s(s1)?, tp.index_of_s(s2)?);
        for &phi in test_functions {
            let v: Vec<f64> =
                (0..tp.m_paths).map(|i| (tp.m_at(i, j2) - tp.m_at(i, j1)) * phi.eval(tp.x_at(i, j1))).collect();
            let z = z_score(&v);
            let name = if tp.perturbed { "martingale_beta" } else { "martingale" };
            report.push(name, (tp.s[j1], tp.s[j2]), phi.name(), z, 4.0, z.abs() < 4.0);
        }
    }
    Ok(report)
}

/// Realized quadratic variation of `M` against `2ΔF` (Fisher part) over the
/// record intervals with `s ≤ T - t0 - 0.05`; pass if the aggregate ratio is
/// within `tolerance` of 1.
pub fn quadratic_variation_test(tp: &TrajectorialProcesses, tolerance: f64) -> MartingaleReport {
    let s_max = tp.horizon.1 - tp.horizon.0 - 0.05;
    let m = tp.m_paths as f64;
    let (mut qv, mut comp) = (0.0, 0.0);
    for j in 1..tp.n_times() {
        if tp.s[j] > s_max + 1e-9 {
            break;
        }
        for i in 0..tp.m_paths {
            let dm = tp.m_at(i, j) - tp.m_at(i, j - 1);
            qv += dm * dm / m;
            comp += 2.0 * (tp.at(&tp.f_fisher, i, j) - tp.at(&tp.f_fisher, i, j - 1)) / m;
        }
    }
    let ratio = if comp > 0.0 { qv / comp } else if qv == 0.0 { 1.0 } else { f64::INFINITY };
    let mut report = MartingaleReport::default();
    report.push("quadratic_variation", (0.0, s_max), "-", ratio, tolerance, (ratio - 1.0).abs() <= tolerance);
    report
}

/// `E[F(t0)] = ½∫I dt` within `rel_tol`, plus the Itô-isometry proxy
/// `max_s E[M²] ≤ 1.1 · 2E[F(t0)]`.
pub fn fisher_budget_test(tp: &TrajectorialProcesses, diag: &FlowDiagnostics, rel_tol: f64) -> MartingaleReport {
    let mc = tp.mean_total_f();
    let grid = diag.half_fisher_integral();
    let rel = if grid != 0.0 { (mc - grid).abs() / grid.abs() } else { mc.abs() };
    let mut report = MartingaleReport::default();
    let span = (0.0, tp.horizon.1 - tp.horizon.0);
    report.push("fisher_budget", span, "-", rel, rel_tol, rel <= rel_tol || (grid == 0.0 && mc.abs() < 1e-3));
    let m2 = tp.max_second_moment_m();
    let bound = 1.1 * 2.0 * mc.max(0.0);
    report.push("m_second_moment", span, "-", m2, bound, m2 <= bound + 1e-12);
    report
}

/// Outcome of [`fontbona_jourdain_test`].
#[derive(Debug, Clone)]
pub struct FontbonaJourdainReport {
    pub report: MartingaleReport,
    /// Forward times used for the submartingale check, decreasing (so reversed time increases).
    pub times: Vec<f64>,
    /// `E_Q[ℓ log ℓ(t, X(t))]` at those times.
    pub entropy_means: Vec<f64>,
    /// Relative sup discrepancy between the kernel regression of
    /// `ℓ(t₁, X(t₁))` on `X(t₂)` and `ℓ(t₂, ·)` for every pair.
    pub regression_gap: Vec<f64>,
}

/// Backward martingale property of `ℓ(T-s, X(T-s))` under the stationary
/// measure `Q` (paths started from the Gibbs density).
pub fn fontbona_jourdain_test(
    flow: &FlowSnapshotSeries,
    opts: SimulationOptions,
    t_pairs: &[(f64, f64)],
    entropy_times: &[f64],
) -> Result<FontbonaJourdainReport> {
    let pot = &flow.potential;
    require_probability_reference(pot)?;
    if flow.perturbation.is_some() {
        return Err(invalid("the Fontbona–Jourdain check is for unperturbed flows"));
    }
    let gibbs = GridDensity::from_fn(*flow.grid(), |x| pot.gibbs_density(x))?;
    let opts = SimulationOptions { t0: flow.t_start(), t_end: flow.t_end(), ..opts };
    let paths = simulate_forward(pot, &InitialLaw::Grid(gibbs), opts, None)?;
    let field = DensityField::new(flow);
    let ell = |k: usize, x: f64| field.log_ell(paths.times[k], x).map(f64::exp);
    let mut report = MartingaleReport::default();
    let mut regression_gap = Vec::new();
    for &(t1, t2) in t_pairs {
        if !(t2 > t1) {
            return Err(invalid(format!("need t1 < t2, got ({t1}, {t2})")));
        }
        let (k1, k2) = (paths.index_of(t1)?, paths.index_of(t2)?);
        let l1: Vec<f64> = (0..paths.m_paths).map(|i| ell(k1, paths.value(i, k1))).collect::<Result<_>>()?;
        let l2: Vec<f64> = (0..paths.m_paths).map(|i| ell(k2, paths.value(i, k2))).collect::<Result<_>>()?;
        let x2 = paths.column(k2);
        let (s1, s2) = (flow.t_end() - t2, flow.t_end() - t1);
        for phi in TestFunction::ALL {
            let v: Vec<f64> = (0..paths.m_paths).map(|i| (l1[i] - l2[i]) * phi.eval(x2[i])).collect();
            let z = z_score(&v);
            report.push("fontbona_jourdain", (s1, s2), phi.name(), z, 4.0, z.abs() < 4.0);
        }
        let reg = nadaraya_watson(&x2, &l1, 0.95, 64)?;
        let gap = reg
            .iter()
            .map(|&(x, m)| {
                let target = field.log_ell(t2, x).map(f64::exp).unwrap_or(f64::NAN);
                (m - target).abs() / target.abs().max(1e-300)
            })
            .fold(0.0, f64::max);
        regression_gap.push(gap);
    }
    let mut times: Vec<f64> = entropy_times.to_vec();
    times.sort_by(|a, b| b.total_cmp(a));
    let mut per_time = Vec::with_capacity(times.len());
    for &t in &times {
        let k = paths.index_of(t)?;
        let v: Vec<f64> = (0..paths.m_paths)
            .map(|i| {
                let ll = field.log_ell(t, paths.value(i, k))?;
                Ok(ll.exp() * ll)
            })
            .collect::<Result<_>>()?;
        per_time.push(v);
    }
    let entropy_means: Vec<f64> = per_time.iter().map(|v| mean_se(v).0).collect();
    for w in 0..per_time.len().saturating_sub(1) {
        let diff: Vec<f64> = per_time[w + 1].iter().zip(&per_time[w]).map(|(b, a)| b - a).collect();
        let (mean, se) = mean_se(&diff);
        let ok = mean >= -2.0 * se;
        let z = if se > 0.0 { mean / se } else { 0.0 };
        report.push("ell_log_ell_monotone", (flow.t_end() - times[w], flow.t_end() - times[w + 1]), "-", z, -2.0, ok);
    }
    Ok(FontbonaJourdainReport { report, times, entropy_means, regression_gap })
}

/// Grid function `ℓ''/ℓ - 2Ψ' ℓ'/ℓ` of a grid density, via log-derivatives.
fn perturbed_forward_integrand(d: &GridDensity, pot: &Potential) -> GridFunction {
    let grid = *d.grid();
    let score = d.score(RELATIVE_CLIP);
    let dscore = central_difference(&score.values, grid.spacing());
    let values = grid
        .nodes()
        .enumerate()
        .map(|(i, x)| {
            let a = score.values[i] + 2.0 * pot.gradient(x);
            let da = dscore[i] + 2.0 * pot.hessian(x);
            da + a * a - 2.0 * pot.gradient(x) * a
        })
        .collect();
    GridFunction { grid, values }
}

/// `E[2∂tℓ/ℓ(t, X(t))] = 0` along a forward ensemble (Monte Carlo Z and grid
/// quadrature), and under a perturbation also
/// `E[ℓ''/ℓ - 2Ψ'ℓ'/ℓ] = 0` for the perturbed likelihood ratio.
pub fn forward_identity_test(
    paths: &PathEnsemble,
    flow: &FlowSnapshotSeries,
    times: &[f64],
    quad_tol: f64,
) -> Result<MartingaleReport> {
    if paths.orientation != Orientation::Forward {
        return Err(invalid("forward identities need a forward ensemble"));
    }
    let field = DensityField::new(flow);
    let pot = &flow.potential;
    let mut report = MartingaleReport::default();
    for &t in times {
        let k = paths.index_of(t)?;
        let kf = flow.index_of(t).ok_or(Error::OutOfRange { t, start: flow.t_start(), end: flow.t_end() })?;
        let v: Vec<f64> =
            (0..paths.m_paths).map(|i| Ok(2.0 * field.dt_log_p(t, paths.value(i, k))?)).collect::<Result<_>>()?;
        let z = z_score(&v);
        report.push("forward_identity_mc", (t, t), "-", z, 4.0, z.abs() < 4.0);
        let d = &flow.states[kf];
        let dt: Vec<f64> = d.grid().nodes().map(|x| field.dt_log_p(t, x)).collect::<Result<_>>()?;
        let w: Vec<f64> = dt.iter().zip(d.values()).map(|(a, p)| 2.0 * a * p).collect();
        let quad = d.grid().trapezoid(&w);
        report.push("forward_identity_quad", (t, t), "-", quad, quad_tol, quad.abs() <= quad_tol);
        if flow.perturbation.is_some() {
            let g = perturbed_forward_integrand(d, pot);
            let v: Vec<f64> = (0..paths.m_paths).map(|i| g.interpolate(paths.value(i, k))).collect();
            let z = z_score(&v);
            report.push("forward_identity_beta_mc", (t, t), "-", z, 4.0, z.abs() < 4.0);
            let w: Vec<f64> = g.values.iter().zip(d.values()).map(|(a, p)| a * p).collect();
            let quad = d.grid().trapezoid(&w);
            report.push("forward_identity_beta_quad", (t, t), "-", quad, quad_tol, quad.abs() <= quad_tol);
        }
    }
    Ok(report)
}

/// Nadaraya–Watson regression of `y` on `x` with a Gaussian kernel and
/// Silverman's bandwidth, evaluated at `points` equally spaced nodes spanning
/// the central `mass` fraction of the empirical law of `x`.
pub fn nadaraya_watson(x: &[f64], y: &[f64], mass: f64, points: usize) -> Result<Vec<(f64, f64)>> {
    if x.len() != y.len() || x.len() < 100 {
        return Err(Error::DegenerateSamples("regression needs at least 100 paired samples".into()));
    }
    let (_, se) = mean_se(x);
    let sd = se * (x.len() as f64).sqrt();
    if !(sd > 0.0) {
        return Err(Error::DegenerateSamples("conditioning variable has zero variance".into()));
    }
    let bw = silverman_bandwidth(sd, x.len());
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - mass);
    let lo = sorted[((tail * sorted.len() as f64) as usize).min(sorted.len() - 1)];
    let hi = sorted[(((1.0 - tail) * sorted.len() as f64) as usize).min(sorted.len() - 1)];
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let reach = 6.0 * bw;
    Ok((0..points)
        .map(|k| {
            let x0 = if points == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * k as f64 / (points - 1) as f64 };
            let a = xs.partition_point(|&v| v < x0 - reach);
            let b = xs.partition_point(|&v| v <= x0 + reach);
            let (mut num, mut den) = (0.0, 0.0);
            for j in a..b {
                let u = (xs[j] - x0) / bw;
                let w = (-0.5 * u * u).exp();
                num += w * ys[j];
                den += w;
            }
            (x0, if den > 0.0 { num / den } else { f64::NAN })
        })
        .collect())
}

/// Outcome of [`trajectorial_rate_test`].
#[derive(Debug, Clone)]
pub struct RateReport {
    pub report: MartingaleReport,
    /// `(x, regression, target)` on the central window.
    pub curve: Vec<(f64, f64, f64)>,
    pub weighted_relative_error: f64,
}

/// Regression of `(log ℓ(t₀, X(t₀)) - log ℓ(t₀+h, X(t₀+h)))/h` on `X(t₀+h)`
/// against `½|∇log ℓ(t₀, ·)|²` (with `2βΨ' - β'` added under a perturbation),
/// compared in the `p(t₀+h)`-weighted relative L² norm; pass below `tol`.
///
/// The target is regressed with the same kernel and samples, so the
/// smoothing bias of the estimator (large near the steep edges of a bump
/// perturbation) cancels and only the identity itself is tested.
pub fn trajectorial_rate_test(
    tp: &TrajectorialProcesses,
    flow: &FlowSnapshotSeries,
    t0: f64,
    h: f64,
    tol: f64,
) -> Result<RateReport> {
    let (j0, jh) = (tp.index_of_t(t0)?, tp.index_of_t(t0 + h)?);
    if jh >= j0 {
        return Err(invalid("rate step h must be positive"));
    }
    let hh = tp.s[j0] - tp.s[jh];
    let t_at = tp.horizon.1 - tp.s[j0];
    let field = DensityField::new(flow);
    let xh: Vec<f64> = (0..tp.m_paths).map(|i| tp.x_at(i, jh)).collect();
    let y: Vec<f64> = (0..tp.m_paths).map(|i| (tp.log_l_at(i, j0) - tp.log_l_at(i, jh)) / hh).collect();
    let target: Vec<f64> = xh
        .par_iter()
        .map(|&x| fisher_integrand(&field, t_at, x).map(|g| g[0] + g[1]))
        .collect::<Result<_>>()?;
    let reg = nadaraya_watson(&xh, &y, 0.95, 80)?;
    let smooth = nadaraya_watson(&xh, &target, 0.95, 80)?;
    let mut curve = Vec::with_capacity(reg.len());
    let (mut num, mut den) = (0.0, 0.0);
    for ((x, m), (_, target)) in reg.into_iter().zip(smooth) {
        let w = field.log_p(t_at + hh, x)?.exp();
        num += w * (m - target) * (m - target);
        den += w * target * target;
        curve.push((x, m, target));
    }
    let err = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
    let mut report = MartingaleReport::default();
    let name = if tp.perturbed { "trajectorial_rate_beta" } else { "trajectorial_rate" };
    report.push(name, (tp.s[jh], tp.s[j0]), "-", err, tol, err < tol || (den == 0.0 && num < 1e-6));
    Ok(RateReport { report, curve, weighted_relative_error: err })
}

/// Pointwise limit `(log ℓ^β - log ℓ)(t0+h)/h → β' + β ∇log p(t0)` on the
/// support of `β`, as a `p(t0)`-weighted relative L² error. The quotient is
/// Richardson-extrapolated from `{2h, h}`.
pub fn perturbed_ratio_limit_error(
    flow: &FlowSnapshotSeries,
    pflow: &FlowSnapshotSeries,
    pert: &Perturbation,
    h: f64,
) -> Result<f64> {
    let t0 = flow.t_start();
    let quotient = |step: f64| -> Result<Vec<f64>> {
        let (p, pb) = (flow.state_at(t0 + step)?, pflow.state_at(t0 + step)?);
        let (lp, lpb) = (p.log_values(RELATIVE_CLIP), pb.log_values(RELATIVE_CLIP));
        Ok(lpb.iter().zip(&lp).map(|(b, a)| (b - a) / step).collect())
    };
    let (q1, q2) = (quotient(h)?, quotient(2.0 * h)?);
    let p0 = &flow.states[0];
    let score = p0.score(RELATIVE_CLIP);
    let (lo, hi) = pert.support();
    let grid: &Grid = p0.grid();
    let (mut num, mut den) = (0.0, 0.0);
    for (i, x) in grid.nodes().enumerate() {
        if x <= lo || x >= hi {
            continue;
        }
        let f = pert.fields(x);
        let target = f.div_beta + f.beta * score.values[i];
        let est = 2.0 * q1[i] - q2[i];
        num += p0.values()[i] * (est - target).powi(2);
        den += p0.values()[i] * target * target;
    }
    Ok(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() })
}

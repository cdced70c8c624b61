//! Pass/fail comparisons of the headline identities and inequalities,
//! assembled from PDE, transport and functional outputs.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::functionals::{likelihood_score, relative_entropy, relative_fisher_information, require_probability_reference, FlowDiagnostics};
use crate::io::{fmt_f64, fmt_time, write_atomic};
use crate::measure::{GridDensity, RELATIVE_CLIP};
use crate::pde::FlowSnapshotSeries;
use crate::potential::{Perturbation, Potential};
use crate::sde::PathEnsemble;
use crate::stochastic_analysis::MartingaleReport;
use crate::transport::{forward_entropy_slope, geodesic_entropy_slope, geodesic_entropy_slope_fd, metric_derivative, wasserstein2, Difference};

/// How `lhs` is compared with `rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    /// `|lhs - rhs| ≤ tol·|rhs|` (with a 1e-8 absolute floor).
    Relative,
    /// `|lhs - rhs| ≤ tol`.
    Absolute,
    /// `lhs ≤ rhs + tol`.
    AtMost,
    /// `lhs ≥ rhs - tol`.
    AtLeast,
    /// Statistic from a Monte Carlo test against its threshold `rhs`. Rows
    /// imported from a [`MartingaleReport`] keep the test's own pass flag
    /// (ratios, one-sided bounds); built directly it means `|lhs| < rhs`.
    Statistic,
    /// The inequality holds trivially; recorded for completeness.
    Vacuous,
    /// Reported value only.
    Info,
}

impl Check {
    fn name(self) -> &'static str {
        match self {
            Check::Relative => "relative",
            Check::Absolute => "absolute",
            Check::AtMost => "at_most",
            Check::AtLeast => "at_least",
            Check::Statistic => "statistic",
            Check::Vacuous => "vacuous",
            Check::Info => "info",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationRecord {
    pub name: String,
    /// Free-form context such as `t0=0.5`.
    pub context: String,
    pub lhs: f64,
    pub rhs: f64,
    pub check: Check,
    pub tolerance: f64,
    pub pass: bool,
}

const RELATIVE_FLOOR: f64 = 1e-8;

impl VerificationRecord {
    pub fn new(name: &str, context: String, lhs: f64, rhs: f64, check: Check, tolerance: f64) -> Self {
        let finite = lhs.is_finite() && rhs.is_finite();
        let pass = finite
            && match check {
                Check::Relative => (lhs - rhs).abs() <= tolerance * rhs.abs() + RELATIVE_FLOOR,
                Check::Absolute => (lhs - rhs).abs() <= tolerance,
                Check::AtMost => lhs <= rhs + tolerance,
                Check::AtLeast => lhs >= rhs - tolerance,
                Check::Statistic => lhs.abs() < rhs,
                Check::Vacuous | Check::Info => true,
            };
        Self { name: name.to_string(), context, lhs, rhs, check, tolerance, pass }
    }

    /// `|lhs - rhs| / |rhs|`.
    pub fn relative_error(&self) -> f64 {
        (self.lhs - self.rhs).abs() / self.rhs.abs()
    }
}

/// A list of records with a CSV form.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerificationReport {
    pub records: Vec<VerificationRecord>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &VerificationRecord> {
        self.records.iter().filter(|r| !r.pass)
    }

    pub fn extend(&mut self, records: impl IntoIterator<Item = VerificationRecord>) {
        self.records.extend(records);
    }

    /// Statistical rows, one record each; `rhs` is the threshold.
    pub fn extend_statistics(&mut self, report: &MartingaleReport) {
        for r in &report.rows {
            let context = format!("s1={};s2={};phi={}", r.s1, r.s2, r.phi);
            self.records.push(VerificationRecord {
                name: r.test.clone(),
                context,
                lhs: r.statistic,
                rhs: r.threshold,
                check: Check::Statistic,
                tolerance: r.threshold,
                pass: r.pass,
            });
        }
    }

    pub fn find(&self, name: &str) -> impl Iterator<Item = &VerificationRecord> {
        let name = name.to_string();
        self.records.iter().filter(move |r| r.name == name)
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("name,context,lhs,rhs,check,tolerance,pass\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.name,
                r.context,
                fmt_f64(r.lhs),
                fmt_f64(r.rhs),
                r.check.name(),
                fmt_f64(r.tolerance),
                r.pass
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv_string().as_bytes())
    }
}

/// `count` snapshot times spread evenly over the interior of the series.
pub fn interior_times(flow: &FlowSnapshotSeries, count: usize) -> Vec<f64> {
    let n = flow.len();
    if n < 3 {
        return Vec::new();
    }
    let mut ks: Vec<usize> = (1..=count).map(|j| (j * (n - 1)) / (count + 1)).filter(|&k| k > 0 && k < n - 1).collect();
    ks.dedup();
    ks.into_iter().map(|k| flow.times[k]).collect()
}

fn snapshot_index(flow: &FlowSnapshotSeries, t: f64) -> Result<usize> {
    flow.index_of(t).ok_or(Error::OutOfRange { t, start: flow.t_start(), end: flow.t_end() })
}

fn require_unperturbed(flow: &FlowSnapshotSeries) -> Result<()> {
    if flow.perturbation.is_some() {
        return Err(invalid("this check needs the unperturbed flow"));
    }
    Ok(())
}

/// Smallest spacing between saved times.
fn snapshot_spacing(flow: &FlowSnapshotSeries) -> f64 {
    flow.times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

/// `dH/dt = -½I`: centered differences at the interior `times`, the
/// Richardson-extrapolated one-sided slope at the first snapshot, and the
/// integral form `H(T) - H(t0) = -½∫I`.
pub fn verify_de_bruijn(flow: &FlowSnapshotSeries, times: &[f64], tol: f64) -> Result<Vec<VerificationRecord>> {
    require_unperturbed(flow)?;
    let diag = FlowDiagnostics::compute(flow);
    let mut out = Vec::with_capacity(times.len() + 2);
    for &t in times {
        let k = snapshot_index(flow, t)?;
        if k == 0 || k + 1 == flow.len() {
            return Err(invalid(format!("t={t} is not an interior snapshot")));
        }
        out.push(VerificationRecord::new(
            "de_bruijn",
            format!("t0={}", fmt_time(t)),
            diag.dhdt_fd[k],
            -0.5 * diag.fisher[k],
            Check::Relative,
            tol,
        ));
    }
    if flow.len() >= 3 {
        let h = snapshot_spacing(flow);
        let slope = forward_entropy_slope(flow, flow.t_start(), h)?;
        out.push(VerificationRecord::new(
            "de_bruijn_start",
            format!("t0={}", fmt_time(flow.t_start())),
            slope,
            -0.5 * diag.fisher[0],
            Check::Relative,
            tol,
        ));
    }
    let n = flow.len();
    out.push(VerificationRecord::new(
        "de_bruijn_integral",
        format!("t0={};t={}", fmt_time(flow.t_start()), fmt_time(flow.t_end())),
        diag.entropy[n - 1] - diag.entropy[0],
        -diag.half_fisher_integral(),
        Check::Relative,
        tol,
    ));
    Ok(out)
}

/// Metric derivative against `½√I` at the interior `times` (centered) and at
/// the first snapshot (one-sided, Richardson), plus the entropy slope ratio
/// `(H(t0+h) - H(t0)) / W₂ → -√I` at `h = 1e-3` (or the snapshot spacing if coarser).
pub fn verify_wasserstein_slope(flow: &FlowSnapshotSeries, times: &[f64], tol: f64) -> Result<Vec<VerificationRecord>> {
    require_unperturbed(flow)?;
    let pot = &flow.potential;
    let h = snapshot_spacing(flow);
    let mut out = Vec::with_capacity(2 * times.len() + 2);
    let fisher_at = |t: f64| flow.state_at(t).map(|d| relative_fisher_information(d, pot));
    for &t in times {
        let speed = metric_derivative(flow, t, h, Difference::Centered)?;
        out.push(VerificationRecord::new(
            "wasserstein_slope",
            format!("t0={}", fmt_time(t)),
            speed,
            0.5 * fisher_at(t)?.sqrt(),
            Check::Relative,
            tol,
        ));
    }
    let t0 = flow.t_start();
    let i0 = fisher_at(t0)?;
    if flow.len() >= 3 {
        out.push(VerificationRecord::new(
            "wasserstein_slope_start",
            format!("t0={}", fmt_time(t0)),
            metric_derivative(flow, t0, h, Difference::Forward)?,
            0.5 * i0.sqrt(),
            Check::Relative,
            tol,
        ));
        let step = h.max(1e-3);
        let (p0, p1) = (flow.state_at(t0)?, flow.state_at(t0 + step)?);
        let w = wasserstein2(p0, p1);
        if w > 0.0 {
            let ratio = (relative_entropy(p1, pot) - relative_entropy(p0, pot)) / w;
            out.push(VerificationRecord::new(
                "entropy_slope_ratio",
                format!("t0={};h={}", fmt_time(t0), fmt_time(step)),
                ratio,
                -i0.sqrt(),
                Check::Relative,
                tol,
            ));
        }
    }
    Ok(out)
}

/// Weighted inner products of the steepest-descent comparison at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteepestDescentTerms {
    /// `⟨a, a⟩ = I`.
    pub aa: f64,
    pub ab: f64,
    pub bb: f64,
    /// `∫ (β' - 2βΨ') p`.
    pub divergence_term: f64,
}

impl SteepestDescentTerms {
    pub fn compute(p: &GridDensity, pot: &Potential, pert: &Perturbation) -> Self {
        let a = likelihood_score(p, pot);
        let grid = *p.grid();
        let (mut aa, mut ab, mut bb, mut dv) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, x) in grid.nodes().enumerate() {
            let w = p.values()[i];
            let f = pert.fields(x);
            let ai = a.values[i];
            aa.push(ai * ai * w);
            ab.push(ai * f.beta * w);
            bb.push(f.beta * f.beta * w);
            dv.push((f.div_beta - 2.0 * f.beta * pot.gradient(x)) * w);
        }
        Self {
            aa: grid.trapezoid(&aa),
            ab: grid.trapezoid(&ab),
            bb: grid.trapezoid(&bb),
            divergence_term: grid.trapezoid(&dv),
        }
    }

    /// `‖a + 2b‖`.
    pub fn perturbed_norm(&self) -> f64 {
        (self.aa + 4.0 * self.ab + 4.0 * self.bb).max(0.0).sqrt()
    }

    /// `-½⟨a, a + 2b⟩`.
    pub fn perturbed_entropy_rate(&self) -> f64 {
        -0.5 * (self.aa + 2.0 * self.ab)
    }

    /// `½‖a + 2b‖`.
    pub fn perturbed_w2_rate(&self) -> f64 {
        0.5 * self.perturbed_norm()
    }

    /// `‖a‖ - ⟨a, (a + 2b)/‖a + 2b‖⟩`.
    pub fn slope_difference(&self) -> Option<f64> {
        let n = self.perturbed_norm();
        (n > 0.0).then(|| self.aa.sqrt() - (self.aa + 2.0 * self.ab) / n)
    }
}

/// Perturbed entropy and `W₂` rates at `t0` from one-sided differences
/// (Richardson over `{2h, h}`) against the grid quadratures, the slope
/// difference, its sign, and the integration-by-parts identity.
pub fn verify_steepest_descent(
    flow: &FlowSnapshotSeries,
    pflow: &FlowSnapshotSeries,
    pert: &Perturbation,
    t0: f64,
    h: f64,
    tol: f64,
) -> Result<Vec<VerificationRecord>> {
    require_unperturbed(flow)?;
    if pflow.perturbation.as_ref() != Some(pert) {
        return Err(invalid("perturbed flow does not carry the given perturbation"));
    }
    let pot = &flow.potential;
    let p = flow.state_at(t0)?;
    if p.l1_distance(pflow.state_at(t0)?)? > 1e-12 {
        return Err(invalid("flows must share the density at t0"));
    }
    let terms = SteepestDescentTerms::compute(p, pot, pert);
    let ctx = || format!("t0={};h={}", fmt_time(t0), fmt_time(h));
    let mut out = Vec::with_capacity(5);
    out.push(VerificationRecord::new(
        "integration_by_parts",
        ctx(),
        terms.divergence_term,
        -terms.ab,
        Check::Absolute,
        1e-5,
    ));
    let Some(diff) = terms.slope_difference() else {
        out.push(VerificationRecord::new("degenerate_perturbed_norm", ctx(), 0.0, 0.0, Check::Info, 0.0));
        return Ok(out);
    };
    let pslope = forward_entropy_slope(pflow, t0, h)?;
    let pspeed = metric_derivative(pflow, t0, h, Difference::Forward)?;
    out.push(VerificationRecord::new(
        "perturbed_entropy_rate",
        ctx(),
        pslope,
        terms.perturbed_entropy_rate(),
        Check::Relative,
        tol,
    ));
    out.push(VerificationRecord::new("perturbed_w2_rate", ctx(), pspeed, terms.perturbed_w2_rate(), Check::Relative, tol));
    let slope = forward_entropy_slope(flow, t0, h)?;
    let speed = metric_derivative(flow, t0, h, Difference::Forward)?;
    let fd_diff = if speed > 0.0 && pspeed > 0.0 { pslope / pspeed - slope / speed } else { f64::NAN };
    out.push(VerificationRecord::new("slope_difference", ctx(), fd_diff, diff, Check::Relative, tol));
    out.push(VerificationRecord::new("slope_difference_nonnegative", ctx(), diff, 0.0, Check::AtLeast, 1e-9));
    Ok(out)
}

/// HWI chain `H₀ - H₁ ≤ -⟨∇log ℓ₀, γ⟩ - (κ/2)W₂² ≤ W₂√I₀ - (κ/2)W₂²`,
/// plus the geodesic entropy slope and its difference-quotient cross-check.
pub fn verify_hwi(d0: &GridDensity, d1: &GridDensity, pot: &Potential) -> Result<Vec<VerificationRecord>> {
    if !d0.grid().same_as(d1.grid()) {
        return Err(Error::GridMismatch("HWI needs both densities on one grid".into()));
    }
    let kappa = pot.curvature_bound();
    let (h0, h1) = (relative_entropy(d0, pot), relative_entropy(d1, pot));
    let i0 = relative_fisher_information(d0, pot);
    let w = wasserstein2(d0, d1);
    let slope = geodesic_entropy_slope(d0, d1, pot);
    let lhs = h0 - h1;
    let sharpened = -slope - 0.5 * kappa * w * w;
    let standard = w * i0.sqrt() - 0.5 * kappa * w * w;
    let ctx = || format!("kappa={kappa};W2={w}");
    let mut out = vec![
        VerificationRecord::new("hwi_sharpened", ctx(), lhs, sharpened, Check::AtMost, 1e-6),
        VerificationRecord::new("hwi_standard", ctx(), sharpened, standard, Check::AtMost, 1e-6),
    ];
    // Richardson over {2τ, τ} for the one-sided geodesic quotient
    let tau = 1e-3;
    let fd = 2.0 * geodesic_entropy_slope_fd(d0, d1, pot, tau)? - geodesic_entropy_slope_fd(d0, d1, pot, 2.0 * tau)?;
    // at a Gibbs start the slope vanishes and only an absolute comparison is meaningful
    let (check, tol) = if slope.abs() < 1e-3 { (Check::Absolute, 1e-4) } else { (Check::Relative, 0.02) };
    out.push(VerificationRecord::new("geodesic_slope_fd", format!("tau={tau}"), fd, slope, check, tol));
    Ok(out)
}

fn gibbs_on(d: &GridDensity, pot: &Potential) -> Result<GridDensity> {
    GridDensity::from_fn(*d.grid(), |x| pot.gibbs_density(x))
}

/// Talagrand `W₂²(P, Q) ≤ (2/κ)H` and log-Sobolev `H ≤ I/(2κ)`.
pub fn verify_talagrand_lsi(d: &GridDensity, pot: &Potential, context: &str) -> Result<Vec<VerificationRecord>> {
    let kappa = pot.curvature_bound();
    if !(kappa > 0.0) {
        return Err(invalid(format!("need a positive curvature bound, got {kappa}")));
    }
    require_probability_reference(pot)?;
    let q = gibbs_on(d, pot)?;
    let w = wasserstein2(d, &q);
    let h = relative_entropy(d, pot);
    let i = relative_fisher_information(d, pot);
    Ok(vec![
        VerificationRecord::new("talagrand", context.to_string(), w * w, 2.0 / kappa * h, Check::AtMost, 1e-6),
        VerificationRecord::new("log_sobolev", context.to_string(), h, i / (2.0 * kappa), Check::AtMost, 1e-6),
    ])
}

/// `H(t) ≤ H(t0) e^{-κ(t - t0)}` at every snapshot (vacuous when `H(t0) ≤ 0`), and for information the
/// least-squares decay exponent of `log H` when `H > 0` throughout.
pub fn verify_exponential_decay(flow: &FlowSnapshotSeries, kappa: f64) -> Result<Vec<VerificationRecord>> {
    if !(kappa > 0.0) {
        return Err(invalid(format!("need kappa > 0, got {kappa}")));
    }
    require_probability_reference(&flow.potential)?;
    let pot = &flow.potential;
    let h: Vec<f64> = flow.states.iter().map(|d| relative_entropy(d, pot)).collect();
    let t0 = flow.t_start();
    // grid round-off puts H of a Gibbs start at about 1e-13 either side of 0
    if h[0] <= 1e-12 {
        return Ok(vec![VerificationRecord::new("exp_decay", format!("t0={}", fmt_time(t0)), h[0], 0.0, Check::Vacuous, 1e-6)]);
    }
    let mut out: Vec<VerificationRecord> = flow
        .times
        .iter()
        .zip(&h)
        .map(|(&t, &ht)| {
            VerificationRecord::new("exp_decay", format!("t={}", fmt_time(t)), ht, h[0] * (-kappa * (t - t0)).exp(), Check::AtMost, 1e-6)
        })
        .collect();
    if h.iter().all(|&v| v > 0.0) && flow.len() >= 2 {
        let n = flow.len() as f64;
        let tm = flow.times.iter().sum::<f64>() / n;
        let lm = h.iter().map(|v| v.ln()).sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (t, v) in flow.times.iter().zip(&h) {
            sxy += (t - tm) * (v.ln() - lm);
            sxx += (t - tm) * (t - tm);
        }
        out.push(VerificationRecord::new("exp_decay_fitted_rate", String::new(), -sxy / sxx, kappa, Check::Info, 0.0));
    }
    Ok(out)
}

/// Reversed-ensemble marginals at the forward `checkpoints` against the PDE
/// snapshots: L¹ distance of the KDE (< 0.05), mean (< 0.02) and variance (< 0.05).
pub fn verify_time_reversal(
    flow: &FlowSnapshotSeries,
    reversed: &PathEnsemble,
    checkpoints: &[f64],
) -> Result<Vec<VerificationRecord>> {
    if reversed.orientation != crate::sde::Orientation::Reversed {
        return Err(invalid("time-reversal check needs a reversed ensemble"));
    }
    let t_end = flow.t_end();
    let mut out = Vec::with_capacity(3 * checkpoints.len());
    for &t in checkpoints {
        let k = reversed.index_of(t_end - t)?;
        let p = flow.state_at(t)?;
        let kde = reversed.marginal_density(k, *p.grid())?;
        let ctx = || format!("t={}", fmt_time(t));
        out.push(VerificationRecord::new("reversal_l1", ctx(), kde.l1_distance(p)?, 0.0, Check::Absolute, 0.05));
        out.push(VerificationRecord::new("reversal_mean", ctx(), reversed.mean(k), p.mean(), Check::Absolute, 0.02));
        out.push(VerificationRecord::new("reversal_variance", ctx(), reversed.variance(k), p.variance(), Check::Absolute, 0.05));
    }
    Ok(out)
}

/// Score identity `∇log p + 2Ψ' = 0` at a Gibbs-shaped density, as a sup on the central window.
pub fn stationary_score_residual(d: &GridDensity, pot: &Potential) -> f64 {
    let s = d.score(RELATIVE_CLIP);
    let range = d.central_window(1e-3);
    range.map(|i| (s.values[i] + 2.0 * pot.gradient(d.grid().node(i))).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Grid;
    use crate::pde::{solve_forward, SolverOptions};

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    fn gauss(m: f64, v: f64) -> GridDensity {
        GridDensity::gaussian(Grid::standard(), m, v).unwrap()
    }

    #[test]
    fn record_checks() {
        let r = VerificationRecord::new("x", String::new(), 1.01, 1.0, Check::Relative, 0.02);
        assert!(r.pass && (r.relative_error() - 0.01).abs() < 1e-12);
        assert!(!VerificationRecord::new("x", String::new(), 1.03, 1.0, Check::Relative, 0.02).pass);
        assert!(VerificationRecord::new("x", String::new(), 1.0, 1.0, Check::AtMost, 0.0).pass);
        assert!(!VerificationRecord::new("x", String::new(), f64::NAN, 1.0, Check::Info, 0.0).pass);
        assert!(!VerificationRecord::new("x", String::new(), -4.5, 4.0, Check::Statistic, 4.0).pass);
        let report = VerificationReport { records: vec![r] };
        assert!(report.to_csv_string().starts_with("name,context,lhs,rhs,check,tolerance,pass\nx,,"));
    }

    #[test]
    fn hwi_gaussian_chain() {
        let pot = Potential::normalized_ornstein_uhlenbeck();
        let recs = verify_hwi(&gauss(1.0, 2.0), &gauss(0.0, 1.0), &pot).unwrap();
        assert!(recs.iter().all(|r| r.pass), "{recs:?}");
        // H(N(1,2)|N(0,1)) = 1 - ½ln 2; sharpened rhs 2 - 1/√2 - ¼W² with W² = 4 - 2√2
        let w2 = 4.0 - 2.0 * SQRT2;
        assert!((recs[0].lhs - (1.0 - 0.5 * 2f64.ln())).abs() < 1e-4);
        assert!((recs[0].rhs - (2.0 - 1.0 / SQRT2 - 0.25 * w2)).abs() < 5e-3);
        assert!((recs[1].rhs - (w2.sqrt() * 1.5f64.sqrt() - 0.25 * w2)).abs() < 5e-3);
        let swapped = verify_hwi(&gauss(0.0, 1.0), &gauss(1.0, 2.0), &pot).unwrap();
        assert!(swapped.iter().all(|r| r.pass));
        assert!(swapped[1].rhs < 0.0);
    }

    #[test]
    fn talagrand_lsi_gaussians() {
        let pot = Potential::normalized_ornstein_uhlenbeck();
        let r = verify_talagrand_lsi(&gauss(0.0, 0.25), &pot, "").unwrap();
        assert!(r.iter().all(|r| r.pass));
        let h = 0.5 * (0.25 - 1.0 - 0.25f64.ln());
        assert!((r[1].lhs - h).abs() < 1e-4 && (r[1].rhs - 2.25).abs() < 1e-3);
        assert!((r[0].lhs - 0.25).abs() < 1e-4);
        assert!(verify_talagrand_lsi(&gauss(0.0, 1.0), &Potential::Zero, "").is_err());
        assert!(verify_talagrand_lsi(&gauss(0.0, 1.0), &Potential::ornstein_uhlenbeck(), "").is_err());
    }

    #[test]
    fn exponential_decay_vacuous_and_mean_shift() {
        let pot = Potential::normalized_ornstein_uhlenbeck();
        let gibbs = gauss(0.0, 1.0);
        let flow = solve_forward(&pot, &gibbs, 0.0, 0.1, SolverOptions::new(1e-3, 10), None).unwrap();
        let r = verify_exponential_decay(&flow, 0.5).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].check, Check::Vacuous);
        // N(1,1) start: H(t) = ½e^{-t}, decay rate 1 = 2κ
        let flow = solve_forward(&pot, &gauss(1.0, 1.0), 0.0, 2.0, SolverOptions::new(1e-3, 100), None).unwrap();
        let r = verify_exponential_decay(&flow, 0.5).unwrap();
        assert!(r.iter().all(|r| r.pass));
        let rate = r.last().unwrap();
        assert_eq!(rate.check, Check::Info);
        assert!((rate.lhs - 1.0).abs() < 0.01, "{}", rate.lhs);
    }

    #[test]
    fn de_bruijn_and_speed_heat() {
        let flow = solve_forward(&Potential::Zero, &gauss(0.0, 1.0), 0.0, 1.0, SolverOptions::new(1e-4, 10), None).unwrap();
        let t = [0.5];
        let r = verify_de_bruijn(&flow, &t, 0.02).unwrap();
        assert!(r.iter().all(|r| r.pass), "{r:?}");
        assert!((r[0].lhs + 1.0 / 3.0).abs() < 0.02 / 3.0);
        let w = verify_wasserstein_slope(&flow, &t, 0.01).unwrap();
        assert!(w.iter().all(|r| r.pass), "{w:?}");
        assert!((w[0].lhs - 0.5 * (2.0f64 / 3.0).sqrt()).abs() < 0.01 * 0.41);
        assert!(verify_de_bruijn(&flow, &[0.0], 0.02).is_err());
    }

    #[test]
    fn steepest_descent_zero_amplitude_is_collinear() {
        let pot = Potential::ornstein_uhlenbeck();
        let zero = Perturbation::new(0.0, 1.0, 0.0).unwrap();
        let terms = SteepestDescentTerms::compute(&gauss(1.0, 2.0), &pot, &zero);
        assert!(terms.slope_difference().unwrap().abs() < 1e-12);
        assert!((terms.aa - 1.5).abs() < 1e-4);
        let pert = Perturbation::new(0.0, 1.0, 0.2).unwrap();
        let terms = SteepestDescentTerms::compute(&gauss(1.0, 2.0), &pot, &pert);
        assert!((terms.divergence_term + terms.ab).abs() < 1e-5);
        assert!(terms.slope_difference().unwrap() > 0.0);
    }

    #[test]
    fn interior_time_selection() {
        let flow = solve_forward(&Potential::Zero, &gauss(0.0, 1.0), 0.0, 0.1, SolverOptions::new(1e-3, 1), None).unwrap();
        let ts = interior_times(&flow, 10);
        assert_eq!(ts.len(), 10);
        assert!(ts.iter().all(|&t| t > 0.0 && t < 0.1));
    }
}

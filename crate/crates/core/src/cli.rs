//! Batch commands `flow`, `simulate` and `verify` writing CSV reports.

use std::path::{Path, PathBuf};
use std::rc::Rc;

use crate::config::{ExperimentConfig, KEYS};
use crate::error::{Error, Result};
use crate::functionals::FlowDiagnostics;
use crate::io::{fmt_time, table_csv, write_atomic};
use crate::pde::{solve_forward, FlowSnapshotSeries};
use crate::potential::{Perturbation, Potential};
use crate::sde::{configure_threads_from_env, simulate_forward, simulate_reversed, PathEnsemble};
use crate::stochastic_analysis::{
    build_processes, default_s_pairs, fisher_budget_test, fontbona_jourdain_test, forward_identity_test,
    martingale_zero_drift_test, perturbed_ratio_limit_error, quadratic_variation_test, simulate_with_fisher,
    trajectorial_rate_test, MartingaleReport, TestFunction, TrajectorialProcesses,
};
use crate::transport::attach_w2_rates;
use crate::verify::{
    interior_times, verify_de_bruijn, verify_exponential_decay, verify_hwi, verify_steepest_descent,
    verify_talagrand_lsi, verify_time_reversal, verify_wasserstein_slope, Check, VerificationRecord,
    VerificationReport,
};

/// Names accepted by `verify --which` (besides `all`).
pub const VERIFICATIONS: [&str; 11] = [
    "de_bruijn",
    "wasserstein_slope",
    "steepest_descent",
    "hwi",
    "talagrand_lsi",
    "exp_decay",
    "time_reversal",
    "martingale",
    "fontbona_jourdain",
    "forward_identity",
    "trajectorial_rate",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Flow,
    Simulate,
    Verify,
}

/// A parsed command line.
#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub command: Command,
    pub config: ExperimentConfig,
    pub which: String,
    pub negative_control: bool,
}

pub const USAGE: &str = "\
usage: otto-lab <flow|simulate|verify> [options]

options:
  --config PATH        key = value experiment file (defaults: OU flow from N(1,2))
  --out DIR            output directory
  --seed N             random seed
  --which NAME         verification to run (verify only), or `all`
  --negative-control   add deliberately corrupted checks that must fail
  --reversed           simulate the time-reversed diffusion
  --KEY VALUE          override any configuration key, e.g. --potential.kind zero

environment:
  OTTO_THREADS         cap on worker threads
";

fn usage_err(message: impl Into<String>) -> Error {
    Error::InvalidParameter(format!("{}\n\n{USAGE}", message.into()))
}

/// Parse `args` (without the program name).
pub fn parse_args(args: &[String]) -> Result<Invocation> {
    let mut it = args.iter();
    let command = match it.next().map(String::as_str) {
        Some("flow") => Command::Flow,
        Some("simulate") => Command::Simulate,
        Some("verify") => Command::Verify,
        Some(other) => return Err(usage_err(format!("unknown command `{other}`"))),
        None => return Err(usage_err("missing command")),
    };
    let mut config_path: Option<PathBuf> = None;
    let mut overrides: Vec<(String, String)> = Vec::new();
    let mut which = String::from("all");
    let mut negative_control = false;
    while let Some(flag) = it.next() {
        let Some(name) = flag.strip_prefix("--") else {
            return Err(usage_err(format!("unexpected argument `{flag}`")));
        };
        match name {
            "negative-control" => negative_control = true,
            "reversed" => overrides.push(("simulate.reversed".into(), "true".into())),
            _ => {
                let value = it.next().ok_or_else(|| usage_err(format!("--{name} needs a value")))?.clone();
                match name {
                    "config" => config_path = Some(PathBuf::from(value)),
                    "out" => overrides.push(("output".into(), value)),
                    "seed" => overrides.push(("seed".into(), value)),
                    "which" => which = value,
                    key if KEYS.contains(&key) => overrides.push((key.to_string(), value)),
                    other => return Err(usage_err(format!("unknown option `--{other}`"))),
                }
            }
        }
    }
    let mut config = match &config_path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for (k, v) in overrides {
        config = config.with_override(&k, &v)?;
    }
    if command == Command::Verify && which != "all" && !VERIFICATIONS.contains(&which.as_str()) {
        return Err(Error::UnknownVerification { name: which, available: VERIFICATIONS.join(", ") });
    }
    Ok(Invocation { command, config, which, negative_control })
}

/// Entry point of the binary: returns the process exit code.
pub fn run(args: &[String]) -> i32 {
    if args.iter().any(|a| a == "--help" || a == "-h") {
        print!("{USAGE}");
        return 0;
    }
    let outcome = configure_threads_from_env().and_then(|()| parse_args(args)).and_then(|inv| match inv.command {
        Command::Flow => cmd_flow(&inv.config).map(|_| true),
        Command::Simulate => cmd_simulate(&inv.config).map(|_| true),
        Command::Verify => {
            let report = cmd_verify(&inv.config, &inv.which, inv.negative_control)?;
            let failed: Vec<_> = report.failures().collect();
            println!("{} records, {} failed", report.records.len(), failed.len());
            for r in &failed {
                println!("FAIL {} [{}] lhs={} rhs={}", r.name, r.context, r.lhs, r.rhs);
            }
            Ok(failed.is_empty())
        }
    });
    match outcome {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn prepare_output(cfg: &ExperimentConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.output)?;
    write_atomic(&cfg.output.join("config.txt"), cfg.to_config_string().as_bytes())?;
    Ok(cfg.output.clone())
}

fn solve(cfg: &ExperimentConfig, pot: &Potential, pert: Option<&Perturbation>) -> Result<FlowSnapshotSeries> {
    solve_forward(pot, &cfg.initial_density()?, cfg.t0, cfg.horizon, cfg.solver_options(), pert)
}

/// Every `k`-th snapshot (always keeping the last) so that at most `max` remain.
fn thinned(flow: &FlowSnapshotSeries, max: usize) -> FlowSnapshotSeries {
    let n = flow.len();
    let stride = (n - 1).div_ceil(max.max(2) - 1).max(1);
    let mut keep: Vec<usize> = (0..n).step_by(stride).collect();
    if *keep.last().unwrap() != n - 1 {
        keep.push(n - 1);
    }
    FlowSnapshotSeries {
        times: keep.iter().map(|&k| flow.times[k]).collect(),
        states: keep.iter().map(|&k| flow.states[k].clone()).collect(),
        potential: flow.potential.clone(),
        perturbation: flow.perturbation,
    }
}

fn write_flow(flow: &FlowSnapshotSeries, dir: &Path, stem: &str, max_snapshots: usize) -> Result<FlowDiagnostics> {
    let mut diag = FlowDiagnostics::compute(flow);
    attach_w2_rates(&mut diag, flow);
    diag.write_csv(&dir.join(format!("{stem}_diagnostics.csv")))?;
    thinned(flow, max_snapshots).write_dir(&dir.join(format!("{stem}_snapshots")))?;
    Ok(diag)
}

/// Solve the configured flow; writes `flow_diagnostics.csv` and
/// `flow_snapshots/`, and the `perturbed_flow_*` counterparts when a
/// perturbation is configured.
pub fn cmd_flow(cfg: &ExperimentConfig) -> Result<FlowDiagnostics> {
    let dir = prepare_output(cfg)?;
    let flow = solve(cfg, &cfg.potential, None)?;
    let diag = write_flow(&flow, &dir, "flow", cfg.snapshots_max)?;
    if let Some(b) = &cfg.perturbation {
        let pflow = solve(cfg, &cfg.potential, Some(b))?;
        write_flow(&pflow, &dir, "perturbed_flow", cfg.snapshots_max)?;
    }
    Ok(diag)
}

/// Record times at tenths of the horizon (or every record if there are fewer).
fn checkpoints(paths: &PathEnsemble, count: usize) -> Vec<usize> {
    let n = paths.n_times();
    let mut ks: Vec<usize> = (0..=count).map(|j| j * (n - 1) / count).collect();
    ks.dedup();
    ks
}

fn write_ensemble(paths: &PathEnsemble, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    paths.head(cfg.ensemble_max_paths).write_csv(&dir.join("ensemble.csv"))
}

/// Simulate the configured diffusion. Forward mode writes `ensemble.csv`
/// and `marginals.csv` (Monte Carlo against PDE moments and the L¹ distance
/// of the kernel density estimate); reversed mode writes `ensemble.csv` and
/// `reversal_report.csv`.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<VerificationReport> {
    let dir = prepare_output(cfg)?;
    let pert = cfg.perturbation.as_ref();
    let flow = solve(cfg, &cfg.potential, pert)?;
    if cfg.reversed {
        let paths = simulate_reversed(&flow, cfg.simulation_options())?;
        write_ensemble(&paths, cfg, &dir)?;
        let ts: Vec<f64> = checkpoints(&paths, 4).into_iter().rev().map(|k| paths.forward_time(k)).collect();
        let report = VerificationReport { records: verify_time_reversal(&flow, &paths, &ts)? };
        report.write_csv(&dir.join("reversal_report.csv"))?;
        return Ok(report);
    }
    let paths = simulate_forward(&cfg.potential, &cfg.initial_law()?, cfg.simulation_options(), pert)?;
    write_ensemble(&paths, cfg, &dir)?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for k in checkpoints(&paths, 10) {
        let t = paths.times[k];
        let p = flow.state_at(t)?;
        let l1 = paths.marginal_density(k, cfg.grid)?.l1_distance(p)?;
        rows.push(vec![t, paths.mean(k), p.mean(), paths.variance(k), p.variance(), l1]);
        records.push(VerificationRecord::new("marginal_l1", format!("t={}", fmt_time(t)), l1, 0.0, Check::Absolute, 0.03));
    }
    write_atomic(&dir.join("marginals.csv"), table_csv(&["t", "mc_mean", "pde_mean", "mc_var", "pde_var", "l1"], rows).as_bytes())?;
    Ok(VerificationReport { records })
}

/// Lazily built ingredients shared between verifications.
struct Lab<'a> {
    cfg: &'a ExperimentConfig,
    flow: Option<Rc<FlowSnapshotSeries>>,
    pflow: Option<Rc<FlowSnapshotSeries>>,
    stochastic: Option<Rc<(PathEnsemble, TrajectorialProcesses)>>,
    pstochastic: Option<Rc<(PathEnsemble, TrajectorialProcesses)>>,
}

impl<'a> Lab<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Self {
        Self { cfg, flow: None, pflow: None, stochastic: None, pstochastic: None }
    }

    fn flow(&mut self) -> Result<Rc<FlowSnapshotSeries>> {
        if self.flow.is_none() {
            self.flow = Some(Rc::new(solve(self.cfg, &self.cfg.potential, None)?));
        }
        Ok(self.flow.clone().unwrap())
    }

    fn pflow(&mut self) -> Result<Rc<FlowSnapshotSeries>> {
        if self.pflow.is_none() {
            let b = self.cfg.perturbation_or_default();
            self.pflow = Some(Rc::new(solve(self.cfg, &self.cfg.potential, Some(&b))?));
        }
        Ok(self.pflow.clone().unwrap())
    }

    /// The unperturbed flow relabelled with the normalized potential (same dynamics).
    fn normalized_flow(&mut self) -> Result<FlowSnapshotSeries> {
        let pot = self.cfg.potential.normalized()?;
        let flow = self.flow()?;
        Ok(FlowSnapshotSeries { potential: pot, ..(*flow).clone() })
    }

    fn stochastic(&mut self, perturbed: bool) -> Result<Rc<(PathEnsemble, TrajectorialProcesses)>> {
        let slot = if perturbed { &self.pstochastic } else { &self.stochastic };
        if let Some(s) = slot {
            return Ok(s.clone());
        }
        let flow = if perturbed { self.pflow()? } else { self.flow()? };
        let mut opts = self.cfg.simulation_options();
        if perturbed {
            opts.seed = opts.seed.wrapping_add(1);
        }
        let paths = simulate_with_fisher(&flow, &self.cfg.initial_law()?, opts)?;
        let tp = build_processes(&paths, &flow, flow.perturbation.as_ref())?;
        let built = Rc::new((paths, tp));
        if perturbed {
            self.pstochastic = Some(built.clone());
        } else {
            self.stochastic = Some(built.clone());
        }
        Ok(built)
    }

    fn span(&self) -> f64 {
        self.cfg.horizon - self.cfg.t0
    }

    /// Forward time `t0 + frac·span` snapped to the path record grid.
    fn record_time(&self, frac: f64) -> f64 {
        let step = self.cfg.dt_sde * self.cfg.record_stride as f64;
        self.cfg.t0 + ((frac * self.span()) / step).round() * step
    }
}

fn is_double_well(p: &Potential) -> bool {
    matches!(p, Potential::DoubleWell { .. })
}

/// Wrong-constant controls: every relative record re-checked against `1.5 × rhs`.
fn wrong_constant_controls(records: &[VerificationRecord]) -> Vec<VerificationRecord> {
    records
        .iter()
        .filter(|r| r.check == Check::Relative)
        .map(|r| {
            VerificationRecord::new(&format!("{}_negative_control", r.name), r.context.clone(), r.lhs, 1.5 * r.rhs, Check::Relative, r.tolerance)
        })
        .collect()
}

fn run_one(lab: &mut Lab, name: &str, negative_control: bool, report: &mut VerificationReport) -> Result<()> {
    let cfg = lab.cfg;
    let mut records: Vec<VerificationRecord> = Vec::new();
    let mut stats = MartingaleReport::default();
    match name {
        "de_bruijn" => {
            let flow = lab.flow()?;
            let tol = if is_double_well(&cfg.potential) { 0.05 } else { 0.02 };
            records = verify_de_bruijn(&flow, &interior_times(&flow, 10), tol)?;
        }
        "wasserstein_slope" => {
            let flow = lab.flow()?;
            records = verify_wasserstein_slope(&flow, &interior_times(&flow, 10), 0.01)?;
        }
        "steepest_descent" => {
            let (flow, pflow) = (lab.flow()?, lab.pflow()?);
            let h = (cfg.dt_pde * cfg.save_stride as f64).max(1e-3);
            records = verify_steepest_descent(&flow, &pflow, &cfg.perturbation_or_default(), cfg.t0, h, 0.03)?;
        }
        "hwi" => {
            let d0 = cfg.initial_density()?;
            let q = crate::measure::GridDensity::from_fn(cfg.grid, |x| cfg.potential.gibbs_density(x))?;
            records = verify_hwi(&d0, &q, &cfg.potential)?;
        }
        "talagrand_lsi" => {
            let flow = lab.normalized_flow()?;
            for (t, d) in flow.times.iter().zip(&flow.states) {
                records.extend(verify_talagrand_lsi(d, &flow.potential, &format!("t={}", fmt_time(*t)))?);
            }
        }
        "exp_decay" => {
            let flow = lab.normalized_flow()?;
            records = verify_exponential_decay(&flow, flow.potential.curvature_bound())?;
        }
        "time_reversal" => {
            let flow = lab.flow()?;
            let rev = simulate_reversed(&flow, cfg.simulation_options())?;
            let ts: Vec<f64> = [0.0, 0.25, 0.5, 0.75].iter().map(|&f| lab.record_time(f)).collect();
            records = verify_time_reversal(&flow, &rev, &ts)?;
        }
        "martingale" => {
            let flow = lab.flow()?;
            let st = lab.stochastic(false)?;
            let tp = &st.1;
            let pairs = default_s_pairs(tp.horizon);
            stats.extend(martingale_zero_drift_test(tp, &pairs, &TestFunction::ALL)?);
            stats.extend(quadratic_variation_test(tp, 0.05));
            stats.extend(fisher_budget_test(tp, &FlowDiagnostics::compute(&flow), 0.02));
            if negative_control {
                let mut neg = martingale_zero_drift_test(&tp.with_scaled_fisher(1.5), &pairs, &[TestFunction::One])?;
                neg.rows.iter_mut().for_each(|r| r.test = "martingale_negative_control".into());
                stats.extend(neg);
            }
            let pst = lab.stochastic(true)?;
            let ptp = &pst.1;
            stats.extend(martingale_zero_drift_test(ptp, &pairs, &TestFunction::ALL)?);
            let mut qv = quadratic_variation_test(ptp, 0.05);
            qv.rows.iter_mut().for_each(|r| r.test = "quadratic_variation_beta".into());
            stats.extend(qv);
            if negative_control {
                let mut neg = martingale_zero_drift_test(&ptp.with_flipped_correction(), &pairs, &TestFunction::ALL)?;
                neg.rows.iter_mut().for_each(|r| r.test = "martingale_beta_negative_control".into());
                stats.extend(neg);
            }
        }
        "fontbona_jourdain" => {
            let flow = lab.normalized_flow()?;
            let t = |f: f64| lab.record_time(f);
            let pairs = [(t(0.0), t(0.5)), (t(0.25), t(0.5)), (t(0.5), t(0.75)), (t(0.75), t(1.0))];
            let times: Vec<f64> = (0..=4).map(|j| t(j as f64 / 4.0)).collect();
            let mut opts = cfg.simulation_options();
            opts.seed = opts.seed.wrapping_add(2);
            let fj = fontbona_jourdain_test(&flow, opts, &pairs, &times)?;
            stats.extend(fj.report);
            for ((t1, t2), gap) in pairs.iter().zip(&fj.regression_gap) {
                records.push(VerificationRecord::new("fj_regression_gap", format!("t1={};t2={}", fmt_time(*t1), fmt_time(*t2)), *gap, 0.0, Check::Info, 0.0));
            }
        }
        "forward_identity" => {
            let times = [lab.record_time(0.3), lab.record_time(0.6)];
            let flow = lab.flow()?;
            let st = lab.stochastic(false)?;
            stats.extend(forward_identity_test(&st.0, &flow, &times, 1e-4)?);
            let pflow = lab.pflow()?;
            let pst = lab.stochastic(true)?;
            stats.extend(forward_identity_test(&pst.0, &pflow, &times, 1e-4)?);
        }
        "trajectorial_rate" => {
            let t0 = lab.record_time(0.2);
            let step = cfg.dt_sde * cfg.record_stride as f64;
            let h = ((50.0 * cfg.dt_sde) / step).floor().max(1.0) * step;
            let flow = lab.flow()?;
            let st = lab.stochastic(false)?;
            stats.extend(trajectorial_rate_test(&st.1, &flow, t0, h, 0.10)?.report);
            let pflow = lab.pflow()?;
            let pst = lab.stochastic(true)?;
            stats.extend(trajectorial_rate_test(&pst.1, &pflow, t0, h, 0.15)?.report);
            let hl = (cfg.dt_pde * cfg.save_stride as f64).max(1e-3);
            let err = perturbed_ratio_limit_error(&flow, &pflow, &cfg.perturbation_or_default(), hl)?;
            records.push(VerificationRecord::new("perturbed_ratio_limit", format!("h={hl}"), err, 0.15, Check::AtMost, 0.0));
        }
        other => {
            return Err(Error::UnknownVerification { name: other.into(), available: VERIFICATIONS.join(", ") });
        }
    }
    if negative_control {
        records.extend(wrong_constant_controls(&records));
    }
    report.extend(records);
    report.extend_statistics(&stats);
    Ok(())
}

/// Run the named verification (or `all`) and write `verification_report.csv`.
/// With `negative_control`, deliberately corrupted variants are added; they
/// are expected to fail.
pub fn cmd_verify(cfg: &ExperimentConfig, which: &str, negative_control: bool) -> Result<VerificationReport> {
    let names: Vec<&str> = if which == "all" {
        VERIFICATIONS.to_vec()
    } else if VERIFICATIONS.contains(&which) {
        vec![which]
    } else {
        return Err(Error::UnknownVerification { name: which.into(), available: VERIFICATIONS.join(", ") });
    };
    let dir = prepare_output(cfg)?;
    let mut lab = Lab::new(cfg);
    let mut report = VerificationReport::default();
    for name in names {
        run_one(&mut lab, name, negative_control, &mut report)?;
    }
    report.write_csv(&dir.join("verification_report.csv"))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn parses_flags_and_overrides() {
        let inv = parse_args(&args("verify --which hwi --seed 5 --out /tmp/x --potential.kind zero --negative-control")).unwrap();
        assert_eq!(inv.command, Command::Verify);
        assert_eq!(inv.which, "hwi");
        assert_eq!(inv.config.seed, 5);
        assert_eq!(inv.config.output, PathBuf::from("/tmp/x"));
        assert_eq!(inv.config.potential, Potential::Zero);
        assert!(inv.negative_control);
        assert!(parse_args(&args("simulate --reversed")).unwrap().config.reversed);
    }

    #[test]
    fn rejects_bad_invocations() {
        let err = parse_args(&args("verify --which bogus")).unwrap_err().to_string();
        for name in VERIFICATIONS {
            assert!(err.contains(name), "{err}");
        }
        assert!(parse_args(&args("explode")).is_err());
        assert!(parse_args(&args("flow --seed")).is_err());
        assert!(parse_args(&args("flow --colour red")).is_err());
        assert!(parse_args(&[]).is_err());
    }

    #[test]
    fn thinning_keeps_ends() {
        let d = crate::measure::GridDensity::gaussian(crate::measure::Grid::new(-5.0, 5.0, 101).unwrap(), 0.0, 1.0).unwrap();
        let flow = FlowSnapshotSeries {
            times: (0..1001).map(|k| k as f64 * 1e-3).collect(),
            states: vec![d; 1001],
            potential: Potential::Zero,
            perturbation: None,
        };
        let t = thinned(&flow, 101);
        assert_eq!(t.len(), 101);
        assert_eq!(t.times[0], 0.0);
        assert!((t.t_end() - 1.0).abs() < 1e-12);
    }
}

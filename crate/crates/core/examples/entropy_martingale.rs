//! Along reversed paths, log ℓ(T-s, X(T-s)) minus its cumulative Fisher
//! information compensator is a martingale. Inflating the compensator breaks it.

use otto_lab::functionals::FlowDiagnostics;
use otto_lab::sde::{InitialLaw, SimulationOptions};
use otto_lab::stochastic_analysis::{
    build_processes, default_s_pairs, fisher_budget_test, martingale_zero_drift_test, quadratic_variation_test,
    simulate_with_fisher, TestFunction,
};
use otto_lab::{solve_forward, Grid, GridDensity, Potential, SolverOptions};

fn main() -> otto_lab::Result<()> {
    let pot = Potential::ornstein_uhlenbeck();
    let flow = solve_forward(&pot, &GridDensity::gaussian(Grid::standard(), 1.0, 2.0)?, 0.0, 1.0, SolverOptions::new(1e-4, 10), None)?;
    let paths = simulate_with_fisher(&flow, &InitialLaw::gaussian(1.0, 2.0)?, SimulationOptions::new(1.0, 1e-3, 20_000, 1))?;
    let tp = build_processes(&paths, &flow, None)?;
    let pairs = default_s_pairs(tp.horizon);

    let mut report = martingale_zero_drift_test(&tp, &pairs, &TestFunction::ALL)?;
    report.extend(quadratic_variation_test(&tp, 0.05));
    report.extend(fisher_budget_test(&tp, &FlowDiagnostics::compute(&flow), 0.02));
    for r in &report.rows {
        println!("{:<20} s=({:.2},{:.2}) phi={:<9} {:>9.4} {}", r.test, r.s1, r.s2, r.phi, r.statistic, if r.pass { "ok" } else { "FAIL" });
    }

    let wrong = martingale_zero_drift_test(&tp.with_scaled_fisher(1.5), &pairs, &[TestFunction::One])?;
    println!("compensator x1.5: max |Z| = {:.1}, rejected: {}", wrong.max_abs("martingale"), !wrong.passed());
    Ok(())
}

//! Talagrand, log-Sobolev and exponential entropy decay along the OU flow,
//! plus the same checks for a user supplied potential.

use std::sync::Arc;

use otto_lab::potential::CustomPotential;
use otto_lab::verify::{verify_exponential_decay, verify_talagrand_lsi};
use otto_lab::{solve_forward, Grid, GridDensity, Potential, SolverOptions};

fn report(name: &str, pot: &Potential) -> otto_lab::Result<()> {
    let init = GridDensity::gaussian(Grid::standard(), 1.5, 0.5)?;
    let flow = solve_forward(pot, &init, 0.0, 3.0, SolverOptions::new(1e-3, 100), None)?;
    let mut worst_margin = f64::INFINITY;
    let mut failures = 0;
    for (t, d) in flow.times.iter().zip(&flow.states) {
        for r in verify_talagrand_lsi(d, pot, &format!("t={t}"))? {
            worst_margin = worst_margin.min(r.rhs - r.lhs);
            failures += usize::from(!r.pass);
        }
    }
    let decay = verify_exponential_decay(&flow, pot.curvature_bound())?;
    failures += decay.iter().filter(|r| !r.pass).count();
    let fitted = decay.iter().find(|r| r.name == "exp_decay_fitted_rate").map_or(f64::NAN, |r| r.lhs);
    println!(
        "{name}: {} snapshots, {failures} failures, smallest slack {worst_margin:.2e}, kappa {} vs fitted decay {fitted:.3}",
        flow.len(),
        pot.curvature_bound()
    );
    Ok(())
}

fn main() -> otto_lab::Result<()> {
    report("OU", &Potential::normalized_ornstein_uhlenbeck())?;

    // Ψ = x²/2 + log cosh(x)/4 is uniformly convex with Ψ'' ≥ 1; the constant
    // normalizes e^{-2Ψ}, computed once by quadrature.
    let raw = |x: f64| 0.5 * x * x + 0.25 * x.cosh().ln();
    let grid = Grid::new(-12.0, 12.0, 20_001)?;
    let values: Vec<f64> = grid.nodes().map(|x| (-2.0 * raw(x)).exp()).collect();
    let shift = 0.5 * grid.trapezoid(&values).ln();
    let pot = Potential::Custom(CustomPotential {
        name: "convex_logcosh".into(),
        value: Arc::new(move |x| raw(x) + shift),
        gradient: Arc::new(|x| x + 0.25 * x.tanh()),
        hessian: Arc::new(|x| 1.0 + 0.25 / x.cosh().powi(2)),
        curvature_bound: 1.0,
        normalizable: true,
        coercivity: (0.0, 0.0),
    });
    report("log-cosh", &pot)
}

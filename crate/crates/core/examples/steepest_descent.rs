//! A bump perturbation of the drift dissipates entropy more slowly per unit
//! of Wasserstein displacement than the unperturbed flow.

use otto_lab::verify::{verify_steepest_descent, SteepestDescentTerms};
use otto_lab::{solve_forward, Grid, GridDensity, Perturbation, Potential, SolverOptions};

fn main() -> otto_lab::Result<()> {
    let pot = Potential::ornstein_uhlenbeck();
    let init = GridDensity::gaussian(Grid::standard(), 1.0, 2.0)?;
    let opts = SolverOptions::new(1e-4, 10);
    let flow = solve_forward(&pot, &init, 0.0, 0.01, opts, None)?;

    println!("{:>10} {:>12} {:>12} {:>12}", "amplitude", "dH/dt", "|p'|", "slope gap");
    for amplitude in [-0.4, -0.2, 0.0, 0.2, 0.4] {
        let bump = Perturbation::new(0.0, 1.0, amplitude)?;
        let terms = SteepestDescentTerms::compute(&init, &pot, &bump);
        println!(
            "{amplitude:>10} {:>12.6} {:>12.6} {:>12.6}",
            terms.perturbed_entropy_rate(),
            terms.perturbed_w2_rate(),
            terms.slope_difference().unwrap_or(f64::NAN)
        );
    }

    let bump = Perturbation::new(0.0, 1.0, 0.2)?;
    let pflow = solve_forward(&pot, &init, 0.0, 0.01, opts, Some(&bump))?;
    for r in verify_steepest_descent(&flow, &pflow, &bump, 0.0, 1e-3, 0.03)? {
        println!("{:<30} {:>12.6} {:>12.6} {}", r.name, r.lhs, r.rhs, if r.pass { "ok" } else { "FAIL" });
    }
    Ok(())
}

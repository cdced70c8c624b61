//! Started from the Gibbs law, ℓ(T-s, X(T-s)) is a backward martingale and
//! ℓ log ℓ a backward submartingale. Its Q-mean is the relative entropy of
//! the flow, printed alongside; ℓ has heavy tails under Q when p(0) is wider
//! than the Gibbs law, so the Monte Carlo means are noisy at early times.

use otto_lab::functionals::relative_entropy;
use otto_lab::sde::SimulationOptions;
use otto_lab::stochastic_analysis::fontbona_jourdain_test;
use otto_lab::{solve_forward, Grid, GridDensity, Potential, SolverOptions};

fn main() -> otto_lab::Result<()> {
    let pot = Potential::normalized_ornstein_uhlenbeck();
    let flow = solve_forward(&pot, &GridDensity::gaussian(Grid::standard(), 1.0, 2.0)?, 0.0, 1.0, SolverOptions::new(1e-4, 10), None)?;
    let pairs = [(0.25, 0.5), (0.5, 0.75), (0.75, 1.0)];
    let times = [0.25, 0.5, 0.75, 1.0];
    let fj = fontbona_jourdain_test(&flow, SimulationOptions::new(1.0, 1e-3, 20_000, 5), &pairs, &times)?;

    println!("max |Z| = {:.3}", fj.report.max_abs("fontbona_jourdain"));
    for (t, v) in fj.times.iter().zip(&fj.entropy_means) {
        println!("t={t:.2}  E_Q[l log l] = {v:.4}  H(P(t)|Q) = {:.4}", relative_entropy(flow.state_at(*t)?, &pot));
    }
    for ((t1, t2), gap) in pairs.iter().zip(&fj.regression_gap) {
        println!("E[l(t1)|X(t2)] vs l(t2), t1={t1} t2={t2}: relative gap {gap:.3}");
    }
    println!("all checks pass: {}", fj.report.passed());
    Ok(())
}

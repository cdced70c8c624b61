//! Ornstein–Uhlenbeck flow from N(1, 2): grid solver against the Gaussian
//! closed form, and the entropy dissipation dH/dt = -I/2 along the way.

use otto_lab::functionals::FlowDiagnostics;
use otto_lab::oracle::{gaussian_entropy_fisher, ou_marginal};
use otto_lab::{solve_forward, GaussianState, Grid, GridDensity, Potential, SolverOptions};

fn main() -> otto_lab::Result<()> {
    let pot = Potential::normalized_ornstein_uhlenbeck();
    let init = GridDensity::gaussian(Grid::standard(), 1.0, 2.0)?;
    let flow = solve_forward(&pot, &init, 0.0, 2.0, SolverOptions::new(1e-4, 100), None)?;
    let diag = FlowDiagnostics::compute(&flow);

    println!("{:>5} {:>10} {:>10} {:>10} {:>10} {:>10}", "t", "H", "H exact", "I", "I exact", "dH/dt+I/2");
    let g0 = GaussianState::new(1.0, 2.0)?;
    for k in (0..flow.len()).step_by(20) {
        let t = flow.times[k];
        let (h, i) = gaussian_entropy_fisher(ou_marginal(g0, t), &pot)?;
        println!(
            "{t:>5.2} {:>10.6} {h:>10.6} {:>10.6} {i:>10.6} {:>10.2e}",
            diag.entropy[k],
            diag.fisher[k],
            diag.dhdt_fd[k] + 0.5 * diag.fisher[k]
        );
    }
    let last = flow.states.last().unwrap();
    println!("final mean {:.5}, variance {:.5}", last.mean(), last.variance());
    Ok(())
}

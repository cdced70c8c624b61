//! The reversed diffusion, driven by the score of the saved flow, walks the
//! terminal law back to the initial one.

use otto_lab::sde::{simulate_reversed, SimulationOptions};
use otto_lab::verify::verify_time_reversal;
use otto_lab::{solve_forward, Grid, GridDensity, Potential, SolverOptions};

fn main() -> otto_lab::Result<()> {
    let pot = Potential::ornstein_uhlenbeck();
    let flow = solve_forward(&pot, &GridDensity::gaussian(Grid::standard(), 1.0, 2.0)?, 0.0, 1.0, SolverOptions::new(1e-4, 10), None)?;
    let rev = simulate_reversed(&flow, SimulationOptions::new(1.0, 1e-3, 20_000, 3))?;

    for s in [0.0, 0.5, 1.0] {
        let k = rev.index_of(s)?;
        println!("s={s}: reversed mean {:.4} var {:.4}", rev.mean(k), rev.variance(k));
    }
    println!("target at t=0: mean 1, var 2");
    for r in verify_time_reversal(&flow, &rev, &[0.0, 0.5])? {
        println!("{:<18} {:<8} |diff| {:.4} (tol {}) {}", r.name, r.context, (r.lhs - r.rhs).abs(), r.tolerance, if r.pass { "ok" } else { "FAIL" });
    }
    Ok(())
}

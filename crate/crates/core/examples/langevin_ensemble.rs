//! Euler–Maruyama paths of dX = -Ψ'(X) dt + dW for the double well, with
//! the kernel density of the ensemble compared against the grid solver.

use otto_lab::sde::{simulate_forward, InitialLaw, SimulationOptions};
use otto_lab::{solve_forward, Grid, GridDensity, Potential, SolverOptions};

fn main() -> otto_lab::Result<()> {
    let pot = Potential::double_well(1.0)?;
    let grid = Grid::standard();
    let flow = solve_forward(&pot, &GridDensity::gaussian(grid, 0.0, 0.25)?, 0.0, 2.0, SolverOptions::new(1e-4, 100), None)?;
    let paths = simulate_forward(&pot, &InitialLaw::gaussian(0.0, 0.25)?, SimulationOptions::new(2.0, 1e-3, 20_000, 7), None)?;

    println!("{:>5} {:>9} {:>9} {:>9} {:>9} {:>8}", "t", "E[X^2]", "grid", "P(X>0)", "grid", "L1");
    for t in [0.0, 0.5, 1.0, 2.0] {
        let k = paths.index_of(t)?;
        let p = flow.state_at(t)?;
        let kde = paths.marginal_density(k, grid)?;
        let right = paths.column(k).iter().filter(|&&x| x > 0.0).count() as f64 / paths.m_paths as f64;
        println!(
            "{t:>5.1} {:>9.4} {:>9.4} {right:>9.4} {:>9.4} {:>8.4}",
            paths.second_moment(k),
            p.expect(|x| x * x),
            1.0 - p.cdf(0.0),
            kde.l1_distance(p)?
        );
    }
    Ok(())
}

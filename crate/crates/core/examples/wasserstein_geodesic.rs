//! Optimal transport on the line: W₂ by quantiles, the Brenier map, the
//! displacement interpolation, and the HWI chain between N(1, 2) and N(0, 1).

use otto_lab::transport::{brenier_map, displacement_interpolation, geodesic_entropy_slope, wasserstein2};
use otto_lab::verify::verify_hwi;
use otto_lab::{Grid, GridDensity, Potential};

fn main() -> otto_lab::Result<()> {
    let pot = Potential::normalized_ornstein_uhlenbeck();
    let grid = Grid::standard();
    let p0 = GridDensity::gaussian(grid, 1.0, 2.0)?;
    let p1 = GridDensity::gaussian(grid, 0.0, 1.0)?;

    let w = wasserstein2(&p0, &p1);
    println!("W2 = {w:.6} (closed form {:.6})", (1.0 + (2f64.sqrt() - 1.0).powi(2)).sqrt());

    // the Brenier map between Gaussians is affine: T(x) = (x - 1)/√2
    let (map, _) = brenier_map(&p0, &p1);
    for x in [-1.0, 1.0, 3.0] {
        println!("T({x:+}) = {:.5}  vs {:.5}", map.interpolate(x), (x - 1.0) / 2f64.sqrt());
    }

    for t in [0.25, 0.5, 0.75] {
        let pt = displacement_interpolation(&p0, &p1, t)?;
        println!("t={t}: mean {:.4}, sd {:.4}, W2(p0,pt)/W2 = {:.4}", pt.mean(), pt.variance().sqrt(), wasserstein2(&p0, &pt) / w);
    }

    println!("geodesic entropy slope {:.5} (1/sqrt2 - 2 = {:.5})", geodesic_entropy_slope(&p0, &p1, &pot), 0.5f64.sqrt() - 2.0);
    for r in verify_hwi(&p0, &p1, &pot)? {
        println!("{:<16} lhs {:.5} rhs {:.5} {}", r.name, r.lhs, r.rhs, if r.pass { "ok" } else { "FAIL" });
    }
    Ok(())
}

//! L² and L¹ constants of the low-frequency projection on a shrinking ball.

use stokes_lab::smallness::{growth_fit, l1_constant_estimate, l2_constant, SubgradientOptions};
use stokes_lab::{solve_modes, Cutoff, Method, RectDomain, SpatialMask};

fn main() -> stokes_lab::Result<()> {
    let d = RectDomain::unit_square(16, 1.0, 2)?;
    let basis = solve_modes(&d, Cutoff::Lambda(400.0), Method::Dense)?;
    println!("{} modes below 400", basis.len());

    let opts = SubgradientOptions { seed: 1, ..SubgradientOptions::default() };
    println!("radius  c2           c1 (lower)   floor");
    for radius in [0.4, 0.3, 0.2, 0.15] {
        let (m, _) = SpatialMask::ball(d, (0.5, 0.5), radius)?;
        let c2 = l2_constant(&basis, &m, 200.0)?.value;
        let c1 = l1_constant_estimate(&basis, &m, 200.0, &opts)?;
        println!("{radius:<6}  {c2:<12.4e} {:<12.4e} {:.4e}", c1.ratio, c1.floor);
    }

    let (m, _) = SpatialMask::ball(d, (0.3, 0.4), 0.2)?;
    let pairs = [100.0, 200.0, 300.0, 400.0]
        .iter()
        .map(|&l| Ok((l, l2_constant(&basis, &m, l)?.value)))
        .collect::<stokes_lab::Result<Vec<_>>>()?;
    let fit = growth_fit(&pairs)?;
    println!("log c2 ≈ {:.3} + {:.3}·√Λ  (R² {:.3})", fit.c0, fit.c1, fit.r_squared);
    Ok(())
}

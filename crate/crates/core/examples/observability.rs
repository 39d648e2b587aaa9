//! Telescoped observability constant for a ball observed on 80% of the
//! time steps, compared with direct ratios of random states.

use stokes_lab::observability::{certify_observability, direct_ratio, TelescopeOptions};
use stokes_lab::rng::{gaussian_vec, stream, streams};
use stokes_lab::{solve_modes, Cutoff, Method, RectDomain, SpaceTimeMask, SpatialMask};

fn main() -> stokes_lab::Result<()> {
    let d = RectDomain::unit_square(16, 0.5, 40)?;
    let basis = solve_modes(&d, Cutoff::Count(10), Method::Dense)?;
    let (ball, _) = SpatialMask::ball(d, (0.5, 0.5), 0.3)?;
    let mask = SpaceTimeMask::cylinder_steps(&ball, |k| k % 5 != 4);

    let report = certify_observability(&basis, &mask, 12, &TelescopeOptions { probes: 24, seed: 3 })?;
    println!("C = {:.4e}, C_obs = {:.4e}", report.c_interp, report.c_obs);
    println!(" m  length      weight      worst ratio");
    for row in &report.intervals {
        println!("{:2}  {:<10.4e}  {:<10.4e}  {:.3}", row.m, row.length, row.weight, row.worst_ratio);
    }

    let mut rng = stream(5, streams::PROBE);
    let worst = (0..20)
        .map(|_| direct_ratio(&basis, &mask, &gaussian_vec(&mut rng, basis.len())))
        .collect::<stokes_lab::Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    println!("largest direct ratio over 20 states: {worst:.4e}");
    Ok(())
}

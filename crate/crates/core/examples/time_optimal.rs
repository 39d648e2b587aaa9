//! Minimal steering time of a five-mode state under three control
//! budgets, with the sampled value curve for the tightest one.

use stokes_lab::timeopt::{minimal_time, TimeOptOptions};
use stokes_lab::{solve_modes, Cutoff, Method, RectDomain, SpatialMask};

fn main() -> stokes_lab::Result<()> {
    let d = RectDomain::unit_square(16, 1.0, 10)?;
    let basis = solve_modes(&d, Cutoff::Count(5), Method::Dense)?;
    let (omega, _) = SpatialMask::ball(d, (0.3, 0.4), 0.25)?;
    let u0 = [1.0, -0.5, 0.25, 0.4, -0.3];
    let opts = TimeOptOptions::default();

    for budget in [4.0, 2.0, 1.0] {
        let res = minimal_time(&basis, &u0, budget, &omega, 2.0, 1e-4, &opts)?;
        println!(
            "M = {budget}: τ* = {:.5}, residual {:.1e}, bang-bang defect {:.3}",
            res.tau_star, res.residual, res.bang_bang.fraction
        );
        if budget == 1.0 {
            res.write_curve_csv(std::io::stdout())?;
        }
    }
    Ok(())
}

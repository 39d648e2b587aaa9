//! Relaxed optimal sensor density for a fifth of the square, certified
//! by its dual bound and checked by Monte Carlo.

use stokes_lab::shape::{randomized_constant_mc, solve_relaxed_design, Law};
use stokes_lab::{solve_modes, Cutoff, Method, RectDomain};

fn main() -> stokes_lab::Result<()> {
    let d = RectDomain::unit_square(16, 1.0, 2)?;
    let basis = solve_modes(&d, Cutoff::Count(12), Method::Dense)?;
    for j in [1, 3, 6] {
        let s = solve_relaxed_design(&basis, 0.05, 0.2, j)?;
        println!(
            "J = {j}: value {:.6e}, dual gap {:.1e}, active {:?}, fractional cells {}",
            s.objective, s.gap, s.active, s.fractional
        );
    }

    let s = solve_relaxed_design(&basis, 0.05, 0.2, 6)?;
    for row in (0..d.cells_y()).rev() {
        let line: String = (0..d.cells_x())
            .map(|cx| match s.design.values[d.cell_index(cx, row)] {
                a if a > 0.99 => '#',
                a if a > 0.01 => '+',
                _ => '.',
            })
            .collect();
        println!("  {line}");
    }

    let a: Vec<f64> = (0..basis.len()).map(|j| 1.0 / (1.0 + j as f64)).collect();
    let mc = randomized_constant_mc(&basis, &s.design, &a, 0.05, 10_000, 4, Law::Gaussian)?;
    println!("MC mean {:.5e} ± {:.1e}, closed form {:.5e}, z = {:.2}", mc.mean, mc.std_err, mc.closed_form, mc.z_score);
    Ok(())
}

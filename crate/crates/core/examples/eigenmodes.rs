//! First Stokes eigenvalues of the unit square, dense versus shift-invert,
//! plus the grid-convergence ratio of λ₁.

use stokes_lab::{solve_modes, Cutoff, Method, RectDomain};

fn main() -> stokes_lab::Result<()> {
    let d = RectDomain::unit_square(24, 1.0, 2)?;
    let dense = solve_modes(&d, Cutoff::Count(8), Method::Dense)?;
    let iter = solve_modes(&d, Cutoff::Count(8), Method::Iterative)?;
    println!(" k  dense            iterative");
    for (k, (a, b)) in dense.eigenvalues().iter().zip(iter.eigenvalues()).enumerate() {
        println!("{:2}  {a:<16.10} {b:<16.10}", k + 1);
    }
    println!("orthonormality {:.1e}, divergence {:.1e}", iter.orthonormality_defect(), iter.max_divergence());

    let l1: Vec<f64> = [16, 32, 64]
        .iter()
        .map(|&n| {
            let b = solve_modes(&RectDomain::unit_square(n, 1.0, 2).unwrap(), Cutoff::Count(1), Method::Iterative).unwrap();
            b.eigenvalues()[0]
        })
        .collect();
    println!("λ1 at n = 16, 32, 64: {l1:.5?}");
    println!("(λ16 − λ32)/(λ32 − λ64) = {:.3}", (l1[0] - l1[1]) / (l1[1] - l1[2]));
    Ok(())
}

//! Finite-difference operators of the clamped plate pencil `Δ²ψ = λ(−Δ)ψ`.

use crate::grid::RectDomain;
use crate::linalg::BandedSym;

/// Interior node `(i, j)`, `1 ≤ i ≤ nx`, `1 ≤ j ≤ ny`, x fastest.
pub fn node_index(domain: &RectDomain, i: usize, j: usize) -> usize {
    debug_assert!((1..=domain.nx).contains(&i) && (1..=domain.ny).contains(&j));
    (j - 1) * domain.nx + (i - 1)
}

/// Biharmonic `A` and negative Laplacian `B`, both `nx·ny` square.
#[derive(Debug, Clone)]
pub struct Operators {
    pub a: BandedSym,
    pub b: BandedSym,
}

pub fn assemble_operators(domain: &RectDomain) -> Operators {
    let (nx, ny) = (domain.nx, domain.ny);
    let n = nx * ny;
    let (ix2, iy2) = (1.0 / (domain.hx * domain.hx), 1.0 / (domain.hy * domain.hy));
    let (ix4, iy4) = (ix2 * ix2, iy2 * iy2);
    let cross = 2.0 * ix2 * iy2;

    let mut a = BandedSym::zeros(n, 2 * nx);
    let mut b = BandedSym::zeros(n, nx);
    for j in 1..=ny {
        for i in 1..=nx {
            let p = node_index(domain, i, j);
            // one-dimensional clamped fourth difference: ghost ψ_{-1} = ψ_1
            let dx = if i == 1 || i == nx { 7.0 } else { 6.0 };
            let dy = if j == 1 || j == ny { 7.0 } else { 6.0 };
            a.add(p, p, dx * ix4 + dy * iy4 + 4.0 * cross);
            b.add(p, p, 2.0 * ix2 + 2.0 * iy2);
            if i > 1 {
                let q = node_index(domain, i - 1, j);
                a.add(p, q, -4.0 * ix4 - 2.0 * cross);
                b.add(p, q, -ix2);
            }
            if i > 2 {
                a.add(p, node_index(domain, i - 2, j), ix4);
            }
            if j > 1 {
                let q = node_index(domain, i, j - 1);
                a.add(p, q, -4.0 * iy4 - 2.0 * cross);
                b.add(p, q, -iy2);
                if i > 1 {
                    a.add(p, node_index(domain, i - 1, j - 1), cross);
                }
                if i < nx {
                    a.add(p, node_index(domain, i + 1, j - 1), cross);
                }
            }
            if j > 2 {
                a.add(p, node_index(domain, i, j - 2), iy4);
            }
        }
    }
    Operators { a, b }
}

impl Operators {
    pub fn n(&self) -> usize {
        self.a.n()
    }

    /// `A − σB`.
    pub fn shifted(&self, sigma: f64) -> BandedSym {
        self.a.add_scaled(-sigma, &self.b)
    }
}

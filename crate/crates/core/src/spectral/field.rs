//! Staggered velocity fields `(∂_yψ, −∂_xψ)` built from interior stream values.
//!
//! `u` lives on vertical edges `(x_i, y_{j+1/2})`, `i = 0..=nx+1`, `j = 0..=ny`;
//! `v` on horizontal edges `(x_{i+1/2}, y_j)`, `i = 0..=nx`, `j = 0..=ny+1`.
//! Each cell sees four edges; the L² quadrature splits every edge half and
//! half between its two cells, so cell sums over the whole grid reproduce
//! the global norm exactly.

use serde::{Deserialize, Serialize};

use super::operators::node_index;
use crate::error::{Error, Result};
use crate::grid::{RectDomain, SpatialMask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaggeredField {
    domain: RectDomain,
    u: Vec<f64>,
    v: Vec<f64>,
}

fn psi_at(d: &RectDomain, psi: &[f64], i: usize, j: usize) -> f64 {
    if i == 0 || j == 0 || i > d.nx || j > d.ny {
        0.0
    } else {
        psi[node_index(d, i, j)]
    }
}

impl StaggeredField {
    pub fn zeros(domain: RectDomain) -> Self {
        Self {
            domain,
            u: vec![0.0; (domain.nx + 2) * (domain.ny + 1)],
            v: vec![0.0; (domain.nx + 1) * (domain.ny + 2)],
        }
    }

    pub fn from_psi(domain: &RectDomain, psi: &[f64]) -> Result<Self> {
        if psi.len() != domain.n_dof() {
            return Err(Error::DimensionMismatch {
                expected: domain.n_dof(),
                got: psi.len(),
            });
        }
        let d = domain;
        let mut f = Self::zeros(*d);
        for j in 0..=d.ny {
            for i in 0..=d.nx + 1 {
                f.u[j * (d.nx + 2) + i] = (psi_at(d, psi, i, j + 1) - psi_at(d, psi, i, j)) / d.hy;
            }
        }
        for j in 0..=d.ny + 1 {
            for i in 0..=d.nx {
                f.v[j * (d.nx + 1) + i] = -(psi_at(d, psi, i + 1, j) - psi_at(d, psi, i, j)) / d.hx;
            }
        }
        Ok(f)
    }

    pub fn domain(&self) -> &RectDomain {
        &self.domain
    }

    /// `u` at vertical edge `(x_i, y_{j+1/2})`.
    pub fn u(&self, i: usize, j: usize) -> f64 {
        self.u[j * (self.domain.nx + 2) + i]
    }

    /// `v` at horizontal edge `(x_{i+1/2}, y_j)`.
    pub fn v(&self, i: usize, j: usize) -> f64 {
        self.v[j * (self.domain.nx + 1) + i]
    }

    /// `[u_left, u_right, v_bottom, v_top]` of cell `c`.
    pub fn cell_edges(&self, c: usize) -> [f64; 4] {
        let (cx, cy) = self.domain.cell_coords(c);
        [
            self.u(cx, cy),
            self.u(cx + 1, cy),
            self.v(cx, cy),
            self.v(cx, cy + 1),
        ]
    }

    /// Edge-averaged velocity vector of cell `c`.
    pub fn cell_vector(&self, c: usize) -> [f64; 2] {
        let e = self.cell_edges(c);
        [0.5 * (e[0] + e[1]), 0.5 * (e[2] + e[3])]
    }

    /// Discrete divergence per cell.
    pub fn divergence(&self) -> Vec<f64> {
        let d = &self.domain;
        (0..d.n_cells())
            .map(|c| {
                let e = self.cell_edges(c);
                (e[1] - e[0]) / d.hx + (e[3] - e[2]) / d.hy
            })
            .collect()
    }

    pub fn max_abs_divergence(&self) -> f64 {
        self.divergence().iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn inner(&self, other: &StaggeredField) -> f64 {
        let s: f64 = crate::linalg::dot(&self.u, &other.u) + crate::linalg::dot(&self.v, &other.v);
        s * self.domain.cell_area()
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// `∫_ω |u|²` by the edge quadrature.
    pub fn l2_norm_on(&self, mask: &SpatialMask) -> f64 {
        let s: f64 = mask
            .cells()
            .map(|c| self.cell_edges(c).iter().map(|x| x * x).sum::<f64>())
            .sum();
        (0.5 * s * self.domain.cell_area()).sqrt()
    }

    /// `∫_ω |u|` with the cell-averaged vector.
    pub fn l1_norm_on(&self, mask: &SpatialMask) -> f64 {
        let s: f64 = mask
            .cells()
            .map(|c| {
                let w = self.cell_vector(c);
                w[0].hypot(w[1])
            })
            .sum();
        s * self.domain.cell_area()
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &StaggeredField) {
        crate::linalg::axpy(alpha, &other.u, &mut self.u);
        crate::linalg::axpy(alpha, &other.v, &mut self.v);
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.u.iter_mut().for_each(|x| *x *= alpha);
        out.v.iter_mut().for_each(|x| *x *= alpha);
        out
    }

    pub fn max_abs_diff(&self, other: &StaggeredField) -> f64 {
        self.u
            .iter()
            .zip(&other.u)
            .chain(self.v.iter().zip(&other.v))
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

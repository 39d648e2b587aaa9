//! Space-time quadrature sets: time samples, each with a weight, the
//! spatial cells it observes, and one decay factor per mode.
//!
//! A modal field sampled at time sample `q` and cell `c` is
//! `Σ_j a_j κ_{qj} E_j(c)` with `E_j(c)` the cell-averaged velocity of mode
//! `j`. Integrals over the set are `Σ_q w_q Σ_{c} |cell| f(q, c)`.

use crate::error::{invalid, Result};
use crate::grid::{SpaceTimeMask, SpatialMask};
use crate::spectral::SpectralBasis;

#[derive(Debug, Clone)]
pub struct TimeSample {
    /// Representative time (step midpoint or quadrature node).
    pub t: f64,
    /// Time measure carried by the sample.
    pub weight: f64,
    /// Time step of the underlying grid or panel index.
    pub step: usize,
    pub cells: Vec<usize>,
    pub kernel: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SampleSet {
    modes: usize,
    cell_area: f64,
    horizon: f64,
    lambdas: Vec<f64>,
    samples: Vec<TimeSample>,
    /// Per cell `[x_1..x_k, y_1..y_k]` of the cell-averaged mode vectors.
    table: Vec<f64>,
}

/// `(1/Δ) ∫_0^Δ e^{−λs} ds`, stable for small `λΔ`.
pub fn average_decay(lambda: f64, delta: f64) -> f64 {
    let x = lambda * delta;
    if x == 0.0 {
        1.0
    } else {
        -(-x).exp_m1() / x
    }
}

const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

fn cell_table(basis: &SpectralBasis, k: usize) -> Vec<f64> {
    let nc = basis.domain().n_cells();
    let mut table = vec![0.0; nc * 2 * k];
    for j in 0..k {
        for (c, v) in basis.mode(j).cell_vectors().iter().enumerate() {
            table[c * 2 * k + j] = v[0];
            table[c * 2 * k + k + j] = v[1];
        }
    }
    table
}

impl SampleSet {
    fn build(basis: &SpectralBasis, horizon: f64, samples: Vec<TimeSample>) -> Self {
        let k = basis.len();
        Self {
            modes: k,
            cell_area: basis.domain().cell_area(),
            horizon,
            lambdas: basis.eigenvalues(),
            samples,
            table: cell_table(basis, k),
        }
    }

    /// Observation of the free solution `z(t) = Σ a_j e^{−λ_j t} e_j` on a
    /// space-time mask, with step-averaged decay.
    pub fn forward_steps(basis: &SpectralBasis, mask: &SpaceTimeMask) -> Result<Self> {
        Self::steps(basis, mask, false)
    }

    /// Adjoint `φ(t) = Σ b_j e^{−λ_j(T−t)} e_j` on a space-time mask, with
    /// step-averaged decay; pairs exactly with step-constant controls.
    pub fn adjoint_steps(basis: &SpectralBasis, mask: &SpaceTimeMask) -> Result<Self> {
        Self::steps(basis, mask, true)
    }

    fn steps(basis: &SpectralBasis, mask: &SpaceTimeMask, adjoint: bool) -> Result<Self> {
        let d = mask.domain();
        if d.n_cells() != basis.domain().n_cells() {
            return Err(invalid("mask", "grid differs from the basis grid"));
        }
        let dt = d.dt();
        let t_end = d.t_horizon;
        let lambdas = basis.eigenvalues();
        let mut samples = Vec::new();
        for k in 0..d.nt {
            let slice = mask.slice(k);
            if slice.is_empty() {
                continue;
            }
            let (t0, t1) = d.step_interval(k);
            let kernel = lambdas
                .iter()
                .map(|&l| {
                    let start = if adjoint { (-l * (t_end - t1)).exp() } else { (-l * t0).exp() };
                    start * average_decay(l, dt)
                })
                .collect();
            samples.push(TimeSample {
                t: 0.5 * (t0 + t1),
                weight: dt,
                step: k,
                cells: slice.cells().collect(),
                kernel,
            });
        }
        Ok(Self::build(basis, t_end, samples))
    }

    /// Free solution on the pieces `(step, lo, hi)` of a space-time mask,
    /// each integrated by 4-point Gauss–Legendre in time; the cells of a
    /// piece are the mask slice at `step`.
    pub fn forward_pieces(basis: &SpectralBasis, mask: &SpaceTimeMask, pieces: &[(usize, f64, f64)]) -> Result<Self> {
        let d = mask.domain();
        if d.n_cells() != basis.domain().n_cells() {
            return Err(invalid("mask", "grid differs from the basis grid"));
        }
        let lambdas = basis.eigenvalues();
        let mut samples = Vec::with_capacity(4 * pieces.len());
        for &(k, lo, hi) in pieces {
            if k >= d.nt || !(hi > lo) {
                return Err(invalid("pieces", format!("bad piece ({k}, {lo}, {hi})")));
            }
            let cells: Vec<usize> = mask.slice(k).cells().collect();
            if cells.is_empty() {
                continue;
            }
            let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            for (x, w) in GAUSS4 {
                let t = mid + half * x;
                samples.push(TimeSample {
                    t,
                    weight: half * w,
                    step: k,
                    cells: cells.clone(),
                    kernel: lambdas.iter().map(|&l| (-l * t).exp()).collect(),
                });
            }
        }
        Ok(Self::build(basis, d.t_horizon, samples))
    }

    /// [`SampleSet::forward_pieces`] over every marked step.
    pub fn forward_gauss(basis: &SpectralBasis, mask: &SpaceTimeMask) -> Result<Self> {
        let d = mask.domain();
        let pieces: Vec<(usize, f64, f64)> = (0..d.nt)
            .filter(|&k| !mask.slice(k).is_empty())
            .map(|k| {
                let (a, b) = d.step_interval(k);
                (k, a, b)
            })
            .collect();
        Self::forward_pieces(basis, mask, &pieces)
    }

    /// Adjoint on `ω × (0, τ)` with `panels` uniform panels of 4-point
    /// Gauss–Legendre nodes.
    pub fn adjoint_cylinder(basis: &SpectralBasis, omega: &SpatialMask, tau: f64, panels: usize) -> Result<Self> {
        if !(tau > 0.0) || panels == 0 {
            return Err(invalid("tau", format!("need tau > 0 and panels > 0, got {tau}, {panels}")));
        }
        let lambdas = basis.eigenvalues();
        let cells: Vec<usize> = omega.cells().collect();
        let h = tau / panels as f64;
        let mut samples = Vec::with_capacity(4 * panels);
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * h;
            for (x, w) in GAUSS4 {
                let t = mid + 0.5 * h * x;
                samples.push(TimeSample {
                    t,
                    weight: 0.5 * h * w,
                    step: p,
                    cells: cells.clone(),
                    kernel: lambdas.iter().map(|&l| (-l * (tau - t)).exp()).collect(),
                });
            }
        }
        Ok(Self::build(basis, tau, samples))
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_area
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn samples(&self) -> &[TimeSample] {
        &self.samples
    }

    pub fn entries(&self) -> usize {
        self.samples.iter().map(|s| s.cells.len()).sum()
    }

    /// Space-time measure of the set.
    pub fn measure(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.weight * s.cells.len() as f64 * self.cell_area)
            .sum()
    }

    /// `(x_1..x_k, y_1..y_k)` of cell `c`.
    pub fn cell_row(&self, c: usize) -> (&[f64], &[f64]) {
        let k = self.modes;
        let row = &self.table[c * 2 * k..(c + 1) * 2 * k];
        row.split_at(k)
    }

    /// Field vectors at every cell of sample `q`.
    pub fn field(&self, q: usize, coeffs: &[f64]) -> Vec<[f64; 2]> {
        let s = &self.samples[q];
        let beta: Vec<f64> = coeffs.iter().zip(&s.kernel).map(|(a, k)| a * k).collect();
        s.cells
            .iter()
            .map(|&c| {
                let (x, y) = self.cell_row(c);
                [crate::linalg::dot(x, &beta), crate::linalg::dot(y, &beta)]
            })
            .collect()
    }

    /// `Σ_q w_q Σ_c |cell| |field|_2` and its gradient in `coeffs`
    /// (a subgradient where the field vanishes).
    pub fn l1_grad(&self, coeffs: &[f64], grad: &mut [f64]) -> f64 {
        let k = self.modes;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for s in &self.samples {
            let w = s.weight * self.cell_area;
            let beta: Vec<f64> = coeffs.iter().zip(&s.kernel).map(|(a, q)| a * q).collect();
            let mut g = vec![0.0; k];
            let mut part = 0.0;
            for &c in &s.cells {
                let (x, y) = self.cell_row(c);
                let (vx, vy) = (crate::linalg::dot(x, &beta), crate::linalg::dot(y, &beta));
                let m = vx.hypot(vy);
                part += m;
                if m > 0.0 {
                    for j in 0..k {
                        g[j] += (vx * x[j] + vy * y[j]) / m;
                    }
                }
            }
            total += w * part;
            for j in 0..k {
                grad[j] += w * s.kernel[j] * g[j];
            }
        }
        total
    }

    /// `Σ_q w_q Σ_c |cell| |field|_p`.
    pub fn l1(&self, coeffs: &[f64], p: f64) -> f64 {
        (0..self.samples.len())
            .map(|q| {
                let w = self.samples[q].weight * self.cell_area;
                self.field(q, coeffs)
                    .iter()
                    .map(|v| crate::rnorm::p_norm(v, p))
                    .sum::<f64>()
                    * w
            })
            .sum()
    }
}

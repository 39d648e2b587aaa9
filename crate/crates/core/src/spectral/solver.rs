//! Generalized symmetric eigensolvers for `Aψ = λBψ`.

use nalgebra::{DMatrix, DVector};

use super::operators::Operators;
use crate::error::{Error, Result};
use crate::linalg::{dot, BandedLdl};

/// Dense solver limit on interior unknowns.
pub const DENSE_LIMIT: usize = 4096;

/// Eigenpairs sorted ascending, vectors B-orthonormal.
pub(crate) struct Pairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub krylov_dim: usize,
}

impl Pairs {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, &r| m.max(r))
    }
}

/// Normwise backward error `‖Aψ − λBψ‖ / ((‖A‖ + |λ|‖B‖)‖ψ‖)`, row-sum norms.
pub(crate) fn residual(ops: &Operators, lambda: f64, psi: &[f64]) -> f64 {
    let a = ops.a.apply(psi);
    let b = ops.b.apply(psi);
    let r: f64 = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - lambda * y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = (ops.a.norm_inf() + lambda.abs() * ops.b.norm_inf()) * crate::linalg::norm(psi);
    r / scale.max(f64::MIN_POSITIVE)
}

/// Every eigenpair, through a Cholesky reduction of the pencil.
pub(crate) fn dense(ops: &Operators) -> Result<Pairs> {
    let n = ops.n();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge {
            limit: DENSE_LIMIT,
            got: n,
        });
    }
    let a = ops.a.to_dense();
    let chol = ops
        .b
        .to_dense()
        .cholesky()
        .ok_or_else(|| Error::Singular("stiffness matrix not positive definite".into()))?;
    let l = chol.l();
    let x = l
        .solve_lower_triangular(&a)
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    let mut c = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let lt = l.transpose();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    for k in order {
        let y: DVector<f64> = eig.eigenvectors.column(k).into_owned();
        let psi = lt
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
        let psi: Vec<f64> = psi.iter().copied().collect();
        let lam = eig.eigenvalues[k];
        residuals.push(residual(ops, lam, &psi));
        values.push(lam);
        vectors.push(psi);
    }
    Ok(Pairs {
        values,
        vectors,
        residuals,
        krylov_dim: n,
    })
}

pub(crate) struct KrylovOptions {
    pub tol: f64,
    pub block: usize,
    pub max_dim: usize,
    pub seed: u64,
}

/// Shift-invert block Krylov with full B-reorthogonalization and
/// Rayleigh–Ritz on `A`. Returns at least `want` converged pairs, or
/// fails once the subspace reaches `max_dim`.
pub(crate) struct BlockKrylov<'a> {
    ops: &'a Operators,
    fac: BandedLdl,
    q: Vec<Vec<f64>>,
    bq: Vec<Vec<f64>>,
    /// `q_iᵀ A q_j`, grown one row at a time.
    h: Vec<Vec<f64>>,
    last_block: Vec<usize>,
    rng: rand_chacha::ChaCha8Rng,
    opts: KrylovOptions,
}

impl<'a> BlockKrylov<'a> {
    pub fn new(ops: &'a Operators, opts: KrylovOptions) -> Result<Self> {
        let fac = BandedLdl::factor(&ops.a)?;
        let rng = crate::rng::stream(opts.seed, crate::rng::streams::LANCZOS);
        let mut s = Self {
            ops,
            fac,
            q: Vec::new(),
            bq: Vec::new(),
            h: Vec::new(),
            last_block: Vec::new(),
            rng,
            opts,
        };
        let start: Vec<Vec<f64>> = (0..s.opts.block.min(ops.n()))
            .map(|_| crate::rng::gaussian_vec(&mut s.rng, ops.n()))
            .collect();
        s.push_block(start);
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    fn push_block(&mut self, block: Vec<Vec<f64>>) {
        let n = self.ops.n();
        let mut added = Vec::new();
        for mut w in block {
            if self.q.len() >= n {
                break;
            }
            let mut accepted = false;
            for _attempt in 0..3 {
                let before = self.ops.b.apply(&w);
                let norm0 = dot(&w, &before).max(0.0).sqrt();
                for _pass in 0..2 {
                    for (qi, bqi) in self.q.iter().zip(&self.bq) {
                        let c = dot(bqi, &w);
                        crate::linalg::axpy(-c, qi, &mut w);
                    }
                }
                let bw = self.ops.b.apply(&w);
                let nb = dot(&w, &bw).max(0.0).sqrt();
                if nb > 1e-10 * norm0 && nb > 0.0 {
                    w.iter_mut().for_each(|x| *x /= nb);
                    let bw: Vec<f64> = bw.iter().map(|x| x / nb).collect();
                    self.append(w, bw);
                    added.push(self.q.len() - 1);
                    accepted = true;
                    break;
                }
                // deflated direction, replace by a fresh random one
                w = crate::rng::gaussian_vec(&mut self.rng, n);
            }
            if !accepted {
                break;
            }
        }
        self.last_block = added;
    }

    fn append(&mut self, q: Vec<f64>, bq: Vec<f64>) {
        let aq = self.ops.a.apply(&q);
        let row: Vec<f64> = self.q.iter().map(|qi| dot(qi, &aq)).chain([dot(&q, &aq)]).collect();
        self.h.push(row);
        self.q.push(q);
        self.bq.push(bq);
    }

    /// One block step `W = A⁻¹ B Q_last`.
    pub fn extend(&mut self) -> bool {
        if self.last_block.is_empty() || self.q.len() >= self.ops.n() {
            return false;
        }
        let block: Vec<Vec<f64>> = self
            .last_block
            .iter()
            .map(|&k| {
                let mut w = self.bq[k].clone();
                self.fac.solve_in_place(&mut w);
                w
            })
            .collect();
        let before = self.q.len();
        self.push_block(block);
        self.q.len() > before
    }

    /// Ritz pairs of the current subspace, ascending, with residuals of
    /// the first `count`.
    pub fn ritz(&self, count: usize) -> Pairs {
        let m = self.q.len();
        let hm = DMatrix::from_fn(m, m, |i, j| if j <= i { self.h[i][j] } else { self.h[j][i] });
        let eig = hm.symmetric_eigen();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let n = self.ops.n();
        let mut values = Vec::new();
        let mut vectors = Vec::new();
        let mut residuals = Vec::new();
        for &k in order.iter().take(count.min(m)) {
            let mut psi = vec![0.0; n];
            for (i, qi) in self.q.iter().enumerate() {
                crate::linalg::axpy(eig.eigenvectors[(i, k)], qi, &mut psi);
            }
            let lam = eig.eigenvalues[k];
            residuals.push(residual(self.ops, lam, &psi));
            values.push(lam);
            vectors.push(psi);
        }
        Pairs {
            values,
            vectors,
            residuals,
            krylov_dim: m,
        }
    }

    pub fn tol(&self) -> f64 {
        self.opts.tol
    }

    pub fn max_dim(&self) -> usize {
        self.opts.max_dim.min(self.ops.n())
    }
}

/// Number of eigenvalues of the pencil strictly below `sigma`.
pub fn inertia_below(ops: &Operators, sigma: f64) -> Result<usize> {
    Ok(BandedLdl::factor(&ops.shifted(sigma))?.negative_pivots())
}

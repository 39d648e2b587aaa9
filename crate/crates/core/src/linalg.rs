//! Small dense helpers and a banded symmetric LDLᵀ factorization.

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Symmetric band matrix, lower band stored row by row.
///
/// Row `i` holds entries `(i, j)` for `j` in `i-bw ..= i` at offset
/// `j + bw - i`; entries before column 0 are unused padding.
#[derive(Debug, Clone)]
pub struct BandedSym {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// Adds `v` to entries `(i, j)` and `(j, i)`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        assert!(i - j <= self.bw, "entry ({i}, {j}) outside band {}", self.bw);
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            let mut acc = row[self.bw] * x[i];
            for j in j0..i {
                let a = row[j + self.bw - i];
                acc += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// `self + alpha * other`, bandwidth of the wider operand.
    pub fn add_scaled(&self, alpha: f64, other: &BandedSym) -> BandedSym {
        assert_eq!(self.n, other.n);
        let bw = self.bw.max(other.bw);
        let mut out = BandedSym::zeros(self.n, bw);
        for i in 0..self.n {
            for j in i.saturating_sub(bw)..=i {
                let v = self.get(i, j) + alpha * other.get(i, j);
                if v != 0.0 {
                    out.add(i, j, v);
                }
            }
        }
        out
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        let mut sums = vec![0.0; self.n];
        for i in 0..self.n {
            for j in i.saturating_sub(self.bw)..=i {
                let a = self.get(i, j).abs();
                sums[i] += a;
                if j != i {
                    sums[j] += a;
                }
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }
}

/// `P = L D Lᵀ` without pivoting, for banded symmetric `P`.
///
/// The number of negative pivots equals the number of negative eigenvalues
/// of `P` (Sylvester), which is how spectral completeness is certified.
#[derive(Debug, Clone)]
pub struct BandedLdl {
    n: usize,
    bw: usize,
    /// Strict lower band of the unit factor, same layout as [`BandedSym`].
    l: Vec<f64>,
    d: Vec<f64>,
}

impl BandedLdl {
    pub fn factor(m: &BandedSym) -> Result<Self> {
        let (n, bw) = (m.n, m.bw);
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        let mut d = vec![0.0; n];
        let scale = m
            .data
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            // row i of L times D, computed left to right
            for j in j0..i {
                let mut s = m.data[i * w + (j + bw - i)];
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= l[i * w + (k + bw - i)] * l[j * w + (k + bw - j)] * d[k];
                }
                l[i * w + (j + bw - i)] = s / d[j];
            }
            let mut s = m.data[i * w + bw];
            for k in j0..i {
                let lik = l[i * w + (k + bw - i)];
                s -= lik * lik * d[k];
            }
            if s.abs() <= 1e-15 * scale {
                return Err(Error::Singular(format!("zero pivot at row {i}")));
            }
            d[i] = s;
        }
        Ok(Self { n, bw, l, d })
    }

    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&v| v < 0.0).count()
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[i * w + (k + bw - i)] * x[k];
            }
            x[i] = s;
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let xi = x[i];
            for k in i.saturating_sub(bw)..i {
                x[k] -= self.l[i * w + (k + bw - i)] * xi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, bw: usize, shift: f64) -> BandedSym {
        let mut m = BandedSym::zeros(n, bw);
        for i in 0..n {
            m.add(i, i, 4.0 + shift + (i % 3) as f64);
            for j in i.saturating_sub(bw)..i {
                m.add(i, j, 1.0 / (1.0 + (i - j) as f64 + (i % 2) as f64));
            }
        }
        m
    }

    #[test]
    fn matvec_matches_dense() {
        let m = sample(13, 3, 0.0);
        let x: Vec<f64> = (0..13).map(|i| (i as f64).sin()).collect();
        let y = m.apply(&x);
        let yd = m.to_dense() * nalgebra::DVector::from_vec(x);
        for i in 0..13 {
            assert!((y[i] - yd[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn ldl_solves_and_counts_inertia() {
        for shift in [0.0, -5.0, -6.0] {
            let m = sample(20, 4, shift);
            let f = BandedLdl::factor(&m).unwrap();
            let dense = m.to_dense();
            let eig = dense.clone().symmetric_eigen();
            let neg = eig.eigenvalues.iter().filter(|&&v| v < 0.0).count();
            assert_eq!(f.negative_pivots(), neg, "shift {shift}");
            let b: Vec<f64> = (0..20).map(|i| 1.0 + i as f64 * 0.1).collect();
            let mut x = b.clone();
            f.solve_in_place(&mut x);
            let r = m.apply(&x);
            for i in 0..20 {
                assert!((r[i] - b[i]).abs() < 1e-10, "shift {shift} row {i}");
            }
        }
    }
}

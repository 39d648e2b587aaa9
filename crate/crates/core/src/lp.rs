//! Dense bounded-variable primal simplex for
//! `min cᵀx  s.t.  Ax = b,  0 ≤ x ≤ u`.
//!
//! Two phases with one artificial per row. Dantzig pricing, switching to
//! Bland's rule after a run of degenerate pivots.

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone)]
pub struct BoundedLp {
    /// Constraint rows, each of length `n`.
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub cost: Vec<f64>,
    /// Upper bounds; `f64::INFINITY` for none.
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row multipliers `y` with `c − Aᵀy` the reduced costs.
    pub duals: Vec<f64>,
    pub iterations: usize,
    pub basis: Vec<usize>,
}

const TOL: f64 = 1e-10;

struct Tableau {
    m: usize,
    width: usize,
    tab: Vec<f64>,
    xb: Vec<f64>,
    basis: Vec<usize>,
    at_upper: Vec<bool>,
    upper: Vec<f64>,
    /// Sign-adjusted `[A | I]` and right-hand side; the column count of `A`.
    orig: Vec<f64>,
    rhs: Vec<f64>,
    n: usize,
    iterations: usize,
}

impl Tableau {
    fn col(&self, i: usize, j: usize) -> f64 {
        self.tab[i * self.width + j]
    }

    fn reduced(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.tab[i * self.width..(i + 1) * self.width];
                for (dj, a) in d.iter_mut().zip(row) {
                    *dj -= cb * a;
                }
            }
        }
        d
    }

    /// Recomputes `x_B = B⁻¹b − Σ_{j at upper} B⁻¹A_j u_j` from the tableau.
    fn refresh(&mut self) {
        let w = self.width;
        let mut in_basis = vec![false; w];
        for &b in &self.basis {
            in_basis[b] = true;
        }
        for i in 0..self.m {
            let row = &self.tab[i * w..(i + 1) * w];
            let mut x: f64 = (0..self.m).map(|k| row[self.n + k] * self.rhs[k]).sum();
            for j in 0..w {
                if self.at_upper[j] && !in_basis[j] {
                    x -= row[j] * self.upper[j];
                }
            }
            self.xb[i] = x;
        }
    }

    /// Rebuilds the tableau as `B⁻¹[A | I]` from a fresh factorization.
    fn reinvert(&mut self) {
        let (m, w) = (self.m, self.width);
        let b = nalgebra::DMatrix::from_fn(m, m, |i, k| self.orig[i * w + self.basis[k]]);
        let Some(inv) = b.lu().try_inverse() else { return };
        for i in 0..m {
            for j in 0..w {
                self.tab[i * w + j] = (0..m).map(|k| inv[(i, k)] * self.orig[k * w + j]).sum();
            }
        }
        self.refresh();
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let w = self.width;
        let p = self.tab[r * w + j];
        for k in 0..w {
            self.tab[r * w + k] /= p;
        }
        let (before, rest) = self.tab.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[j];
            if f != 0.0 {
                for (x, y) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * y;
                }
            }
        }
        self.basis[r] = j;
    }

    /// Runs the simplex on `cost`; `allowed(j)` gates entering columns.
    fn optimize(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool, max_iter: usize) -> Result<()> {
        let mut in_basis = vec![false; self.width];
        for &b in &self.basis {
            in_basis[b] = true;
        }
        let mut degenerate = 0;
        let mut bland = false;
        let mut fresh = false;
        loop {
            if self.iterations >= max_iter {
                return Err(Error::Singular(format!("simplex exceeded {max_iter} iterations")));
            }
            let d = self.reduced(cost);
            let scale = cost.iter().fold(1.0_f64, |m, c| m.max(c.abs()));
            let mut enter = None;
            let mut best = 0.0;
            for j in 0..self.width {
                if in_basis[j] || !allowed(j) || self.upper[j] <= 0.0 {
                    continue;
                }
                let score = if self.at_upper[j] { d[j] } else { -d[j] };
                if score > TOL * scale {
                    if bland {
                        enter = Some(j);
                        break;
                    }
                    if score > best {
                        best = score;
                        enter = Some(j);
                    }
                }
            }
            let Some(j) = enter else {
                if fresh {
                    return Ok(());
                }
                self.reinvert();
                fresh = true;
                continue;
            };
            fresh = false;
            let sigma = if self.at_upper[j] { -1.0 } else { 1.0 };

            let mut theta = self.upper[j];
            let mut leave: Option<(usize, bool)> = None;
            let mut leave_pivot = 0.0;
            for i in 0..self.m {
                let a = sigma * self.col(i, j);
                let (limit, to_upper) = if a > TOL {
                    (self.xb[i].max(0.0) / a, false)
                } else if a < -TOL && self.upper[self.basis[i]].is_finite() {
                    ((self.upper[self.basis[i]] - self.xb[i]).max(0.0) / -a, true)
                } else {
                    continue;
                };
                let eps = 1e-15 * limit.max(1.0);
                let better = match leave {
                    _ if limit < theta - eps => true,
                    Some((r, _)) if limit <= theta + eps => {
                        if bland {
                            self.basis[i] < self.basis[r]
                        } else {
                            a.abs() > leave_pivot
                        }
                    }
                    _ => false,
                };
                if better {
                    theta = limit;
                    leave = Some((i, to_upper));
                    leave_pivot = a.abs();
                }
            }
            if theta.is_infinite() {
                return Err(invalid("lp", "objective unbounded"));
            }
            self.iterations += 1;
            if theta <= 1e-14 {
                degenerate += 1;
                if degenerate > 50 {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            for i in 0..self.m {
                self.xb[i] -= sigma * theta * self.col(i, j);
            }
            match leave {
                None => self.at_upper[j] = !self.at_upper[j],
                Some((r, to_upper)) => {
                    let start = if self.at_upper[j] { self.upper[j] } else { 0.0 };
                    let old = self.basis[r];
                    self.at_upper[old] = to_upper;
                    in_basis[old] = false;
                    in_basis[j] = true;
                    self.at_upper[j] = false;
                    self.pivot(r, j);
                    self.xb[r] = start + sigma * theta;
                    if self.iterations.is_multiple_of(64) {
                        self.reinvert();
                    }
                }
            }
        }
    }
}

pub fn solve(lp: &BoundedLp) -> Result<LpSolution> {
    let m = lp.rows.len();
    let n = lp.cost.len();
    if lp.rhs.len() != m || lp.upper.len() != n || lp.rows.iter().any(|r| r.len() != n) {
        return Err(invalid("lp", "inconsistent dimensions"));
    }
    if lp.upper.iter().any(|&u| !(u >= 0.0)) {
        return Err(invalid("lp", "upper bounds must be non-negative"));
    }
    let width = n + m;
    let mut tab = vec![0.0; m * width];
    let mut sign = vec![1.0; m];
    let mut xb = vec![0.0; m];
    for i in 0..m {
        sign[i] = if lp.rhs[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            tab[i * width + j] = sign[i] * lp.rows[i][j];
        }
        tab[i * width + n + i] = 1.0;
        xb[i] = sign[i] * lp.rhs[i];
    }
    let mut upper = lp.upper.clone();
    upper.extend(std::iter::repeat_n(f64::INFINITY, m));
    let mut t = Tableau {
        m,
        width,
        orig: tab.clone(),
        tab,
        rhs: xb.clone(),
        n,
        xb,
        basis: (n..n + m).collect(),
        at_upper: vec![false; width],
        upper,
        iterations: 0,
    };
    let max_iter = 50 * (width + m) + 1000;

    let mut phase1 = vec![0.0; width];
    phase1[n..].iter_mut().for_each(|c| *c = 1.0);
    t.optimize(&phase1, &|_| true, max_iter)?;
    let infeasibility: f64 = (0..m).filter(|&i| t.basis[i] >= n).map(|i| t.xb[i].abs()).sum();
    let scale = 1.0 + lp.rhs.iter().map(|b| b.abs()).sum::<f64>();
    if infeasibility > 1e-9 * scale {
        return Err(Error::Infeasible(format!("phase one stops at infeasibility {infeasibility:e}")));
    }
    for j in n..width {
        t.upper[j] = 0.0;
    }
    let mut cost = lp.cost.clone();
    cost.extend(std::iter::repeat_n(0.0, m));
    t.optimize(&cost, &|j| j < n, max_iter)?;

    let mut x = vec![0.0; n];
    for j in 0..n {
        if t.at_upper[j] {
            x[j] = lp.upper[j];
        }
    }
    for i in 0..m {
        if t.basis[i] < n {
            x[t.basis[i]] = t.xb[i].clamp(0.0, lp.upper[t.basis[i]]);
        }
    }
    // y = S (c_B B⁻¹); B⁻¹ sits in the artificial columns
    let mut duals = vec![0.0; m];
    for k in 0..m {
        let mut y = 0.0;
        for i in 0..m {
            y += cost[t.basis[i]] * t.col(i, n + k);
        }
        duals[k] = sign[k] * y;
    }
    let objective = lp.cost.iter().zip(&x).map(|(c, x)| c * x).sum();
    Ok(LpSolution {
        x,
        objective,
        duals,
        iterations: t.iterations,
        basis: t.basis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_bounded_problem() {
        // max x + y, x + 2y = 2 with slack, x ≤ 1.5
        let lp = BoundedLp {
            rows: vec![vec![1.0, 2.0, 1.0]],
            rhs: vec![2.0],
            cost: vec![-1.0, -1.0, 0.0],
            upper: vec![1.5, f64::INFINITY, f64::INFINITY],
        };
        let s = solve(&lp).unwrap();
        assert!((s.x[0] - 1.5).abs() < 1e-12 && (s.x[1] - 0.25).abs() < 1e-12);
        assert!((s.objective + 1.75).abs() < 1e-12);
        assert!((s.duals[0] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let lp = BoundedLp {
            rows: vec![vec![1.0, 1.0]],
            rhs: vec![3.0],
            cost: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
        };
        assert!(matches!(solve(&lp), Err(Error::Infeasible(_))));
        let lp = BoundedLp {
            rows: vec![vec![1.0, -1.0]],
            rhs: vec![0.0],
            cost: vec![-1.0, 0.0],
            upper: vec![f64::INFINITY, f64::INFINITY],
        };
        assert!(solve(&lp).is_err());
    }

    #[test]
    fn knapsack_relaxation_matches_greedy() {
        // max Σ v_i x_i with Σ x_i = 2.5, 0 ≤ x ≤ 1
        let v = [0.3, 0.9, 0.1, 0.7, 0.5];
        let lp = BoundedLp {
            rows: vec![vec![1.0; 5]],
            rhs: vec![2.5],
            cost: v.iter().map(|x| -x).collect(),
            upper: vec![1.0; 5],
        };
        let s = solve(&lp).unwrap();
        assert!((s.objective + (0.9 + 0.7 + 0.25)).abs() < 1e-12);
        assert!((s.x[4] - 0.5).abs() < 1e-12);
    }
}

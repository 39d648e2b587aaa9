//! Spectral-inequality constants on masks: exact L² constants from Gram
//! matrices, L¹ lower bounds by projected subgradient on the sphere, the
//! `e^{C√Λ}` growth fit, and a propagation-of-smallness diagnostic.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grid::SpatialMask;
use crate::linalg::{dot, norm};
use crate::spectral::{derivative_growth_check, GrowthTable, SpectralBasis};

/// Gram tolerance below which the smallest eigenvalue counts as zero.
pub const GRAM_TOL: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub matrix: DMatrix<f64>,
    pub lambda: f64,
}

impl GramMatrix {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    /// Smallest eigenvalue and its unit eigenvector.
    pub fn min_eigen(&self) -> (f64, Vec<f64>) {
        let eig = self.matrix.clone().symmetric_eigen();
        let k = eig.eigenvalues.imin();
        let v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        (eig.eigenvalues[k], v)
    }

    pub fn max_abs_diff(&self, other: &GramMatrix) -> f64 {
        (&self.matrix - &other.matrix).abs().max()
    }
}

fn modes_for(basis: &SpectralBasis, lambda: f64) -> Result<usize> {
    let k = basis.count_below(lambda);
    if k == 0 {
        return Err(invalid("lambda", format!("no eigenvalue below {lambda}")));
    }
    if k == basis.len() && lambda > basis.info().inertia_shift {
        return Err(invalid(
            "lambda",
            format!(
                "{lambda} exceeds the certified range {} of the basis",
                basis.info().inertia_shift
            ),
        ));
    }
    Ok(k)
}

/// `G_ij = ∫_ω e_i·e_j` by the edge quadrature.
pub fn gram(basis: &SpectralBasis, mask: &SpatialMask, lambda: f64) -> Result<GramMatrix> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let k = modes_for(basis, lambda)?;
    let cells: Vec<usize> = mask.cells().collect();
    let edges: Vec<&[[f64; 4]]> = (0..k).map(|j| basis.mode(j).cell_edges()).collect();
    let w = 0.5 * basis.domain().cell_area();
    let mut g = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let s: f64 = cells
                .iter()
                .map(|&c| {
                    let (a, b) = (&edges[i][c], &edges[j][c]);
                    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
                })
                .sum();
            g[(i, j)] = w * s;
            g[(j, i)] = w * s;
        }
    }
    Ok(GramMatrix { matrix: g, lambda })
}

#[derive(Debug, Clone, Serialize)]
pub struct L2Constant {
    /// `λ_min(G)^{−1/2}`.
    pub value: f64,
    pub min_eig: f64,
    /// Unit coefficient vector attaining the worst ratio.
    pub vector: Vec<f64>,
}

pub fn l2_constant(basis: &SpectralBasis, mask: &SpatialMask, lambda: f64) -> Result<L2Constant> {
    let g = gram(basis, mask, lambda)?;
    let (min_eig, vector) = g.min_eigen();
    if !(min_eig > GRAM_TOL) {
        return Err(Error::DegenerateGram { min_eig });
    }
    Ok(L2Constant {
        value: min_eig.powf(-0.5),
        min_eig,
        vector,
    })
}

#[derive(Debug, Clone)]
pub struct SubgradientOptions {
    pub iterations: usize,
    pub eta0: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Extra starting vectors tried before the random restarts.
    pub warm_starts: Vec<Vec<f64>>,
}

impl Default for SubgradientOptions {
    fn default() -> Self {
        Self {
            iterations: 200,
            eta0: 0.1,
            restarts: 8,
            seed: 0,
            warm_starts: Vec::new(),
        }
    }
}

/// Linear map from coefficients to cell vectors, weighted by cell measure.
pub(crate) struct CellMap {
    /// `rows[c] = (weight, E_1(c) .. E_k(c))` flattened as `[x..., y...]`.
    weights: Vec<f64>,
    xs: Vec<Vec<f64>>,
    ys: Vec<Vec<f64>>,
}

impl CellMap {
    pub fn new(basis: &SpectralBasis, k: usize, cells: impl Iterator<Item = (usize, f64)>) -> Self {
        let mut weights = Vec::new();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (c, w) in cells {
            weights.push(w);
            xs.push((0..k).map(|j| basis.mode(j).cell_vectors()[c][0]).collect());
            ys.push((0..k).map(|j| basis.mode(j).cell_vectors()[c][1]).collect());
        }
        Self { weights, xs, ys }
    }

    /// `Σ_c w_c |Φ_c a|` and, optionally, a subgradient.
    pub fn l1(&self, a: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let mut total = 0.0;
        let mut g = grad;
        if let Some(g) = g.as_deref_mut() {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
        for ((w, x), y) in self.weights.iter().zip(&self.xs).zip(&self.ys) {
            let (vx, vy) = (dot(x, a), dot(y, a));
            let m = vx.hypot(vy);
            total += w * m;
            if let Some(g) = g.as_deref_mut() {
                if m > 0.0 {
                    let (sx, sy) = (w * vx / m, w * vy / m);
                    for j in 0..g.len() {
                        g[j] += sx * x[j] + sy * y[j];
                    }
                }
            }
        }
        total
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RestartResult {
    pub start: usize,
    /// Best `1 / ∫_ω|u|` over the run, unit coefficients.
    pub ratio: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct L1Estimate {
    /// Certified lower bound on the L¹ constant.
    pub ratio: f64,
    pub best: Vec<f64>,
    pub restarts: Vec<RestartResult>,
    /// No restart reached a plateau within the step schedule.
    pub stagnated: bool,
    /// `c₂ / |ω|^{1/2}`, the Cauchy–Schwarz floor.
    pub floor: f64,
}

/// Minimize a positively homogeneous convex `f` over the unit sphere from
/// `start`; returns (best value, best point, plateau flag).
pub(crate) fn sphere_descent(
    f: &dyn Fn(&[f64], Option<&mut [f64]>) -> f64,
    start: &[f64],
    iterations: usize,
    eta0: f64,
) -> (f64, Vec<f64>, bool) {
    let k = start.len();
    let mut a = start.to_vec();
    let n0 = norm(&a);
    a.iter_mut().for_each(|x| *x /= n0);
    let mut g = vec![0.0; k];
    let mut best = f(&a, Some(&mut g));
    let mut best_a = a.clone();
    let tail = iterations - iterations / 5;
    let mut best_at_tail = best;
    for it in 1..=iterations {
        if it == tail {
            best_at_tail = best;
        }
        let ga = dot(&g, &a);
        let mut t: Vec<f64> = g.iter().zip(&a).map(|(gi, ai)| gi - ga * ai).collect();
        let tn = norm(&t);
        if tn <= 1e-15 * norm(&g).max(f64::MIN_POSITIVE) {
            return (best, best_a, true);
        }
        t.iter_mut().for_each(|x| *x /= tn);
        let eta = eta0 / (it as f64).sqrt();
        for (ai, ti) in a.iter_mut().zip(&t) {
            *ai -= eta * ti;
        }
        let na = norm(&a);
        a.iter_mut().for_each(|x| *x /= na);
        let v = f(&a, Some(&mut g));
        if v < best {
            best = v;
            best_a.copy_from_slice(&a);
        }
    }
    let plateau = best_at_tail - best <= 1e-6 * best.abs();
    (best, best_a, plateau)
}

/// Lower bound on `sup ‖a‖ / ∫_ω |Σ a_j e_j|` over modes `λ_j ≤ Λ`.
pub fn l1_constant_estimate(
    basis: &SpectralBasis,
    mask: &SpatialMask,
    lambda: f64,
    opts: &SubgradientOptions,
) -> Result<L1Estimate> {
    if opts.restarts < 8 {
        return Err(invalid("restarts", format!("need at least 8, got {}", opts.restarts)));
    }
    let l2 = l2_constant(basis, mask, lambda)?;
    let k = l2.vector.len();
    let area = basis.domain().cell_area();
    let map = CellMap::new(basis, k, mask.cells().map(|c| (c, area)));
    let f = |a: &[f64], g: Option<&mut [f64]>| map.l1(a, g);

    let mut starts: Vec<Vec<f64>> = vec![l2.vector.clone()];
    for w in &opts.warm_starts {
        if w.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: w.len(),
            });
        }
        starts.push(w.clone());
    }
    let fixed = starts.len();
    for r in 0..opts.restarts {
        let mut rng = crate::rng::stream(opts.seed, crate::rng::streams::L1_RESTART + r as u64);
        starts.push(crate::rng::unit_vec(&mut rng, k));
    }
    let runs: Vec<(f64, Vec<f64>, bool)> = starts
        .par_iter()
        .map(|s| sphere_descent(&f, s, opts.iterations, opts.eta0))
        .collect();
    let mut best = 0usize;
    for (i, r) in runs.iter().enumerate() {
        if r.0 < runs[best].0 {
            best = i;
        }
    }
    let restarts = runs
        .iter()
        .enumerate()
        .map(|(i, r)| RestartResult {
            start: i,
            ratio: 1.0 / r.0,
            converged: r.2,
        })
        .collect::<Vec<_>>();
    let stagnated = runs[fixed..].iter().all(|r| !r.2);
    Ok(L1Estimate {
        ratio: 1.0 / runs[best].0,
        best: runs[best].1.clone(),
        restarts,
        stagnated,
        floor: l2.value / mask.measure().sqrt(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantFit {
    pub pairs: Vec<(f64, f64)>,
    /// Intercept of `log c = C0 + C1 √Λ`.
    pub c0: f64,
    pub c1: f64,
    pub r_squared: f64,
}

pub fn growth_fit(pairs: &[(f64, f64)]) -> Result<ConstantFit> {
    if pairs.len() < 3 {
        return Err(invalid("pairs", format!("need at least 3, got {}", pairs.len())));
    }
    let mut ls: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    ls.sort_by(f64::total_cmp);
    if ls.windows(2).any(|w| w[0] == w[1]) {
        return Err(invalid("pairs", "cutoffs must be distinct"));
    }
    if pairs.iter().any(|p| !(p.1 > 0.0) || !(p.0 >= 0.0)) {
        return Err(invalid("pairs", "constants must be positive and cutoffs non-negative"));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.sqrt()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let (c0, c1, r_squared) = crate::stats::linear_fit(&xs, &ys);
    Ok(ConstantFit {
        pairs: pairs.to_vec(),
        c0,
        c1,
        r_squared,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SmallnessReport {
    pub sup_ball: f64,
    pub l1_sub: f64,
    pub majorant: f64,
    /// Exponent with `sup = l1^θ M̂^{1−θ}`; `None` when outside `(0, 1)`.
    pub theta: Option<f64>,
    pub theta_raw: f64,
    pub growth: GrowthTable,
}

/// Order of the derivative table behind the analytic majorant.
pub const DIAGNOSTIC_ORDER: usize = 3;

pub fn smallness_diagnostic(
    basis: &SpectralBasis,
    a: &[f64],
    lambda: f64,
    ball: &SpatialMask,
    sub: &SpatialMask,
) -> Result<SmallnessReport> {
    if !sub.is_subset_of(ball) {
        return Err(invalid("sub_mask", "must be contained in the ball mask"));
    }
    let k = modes_for(basis, lambda)?;
    if a.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: a.len(),
        });
    }
    let mut padded = a.to_vec();
    padded.resize(basis.len(), 0.0);
    let cells = basis.synthesize_cells(&padded)?;
    let sup_ball = ball
        .cells()
        .map(|c| cells[c][0].hypot(cells[c][1]))
        .fold(0.0, f64::max);
    if sup_ball == 0.0 {
        return Err(Error::Degenerate("field vanishes on the ball".into()));
    }
    let l1_sub: f64 = sub.cells().map(|c| cells[c][0].hypot(cells[c][1])).sum::<f64>()
        * basis.domain().cell_area();
    let growth = derivative_growth_check(basis, a, lambda, DIAGNOSTIC_ORDER, ball)?;
    let majorant = growth.majorant_factor() * norm(a);
    let theta_raw = if (majorant.ln() - l1_sub.ln()).abs() > 0.0 {
        (majorant.ln() - sup_ball.ln()) / (majorant.ln() - l1_sub.ln())
    } else {
        f64::NAN
    };
    let theta = (theta_raw > 0.0 && theta_raw < 1.0).then_some(theta_raw);
    Ok(SmallnessReport {
        sup_ball,
        l1_sub,
        majorant,
        theta,
        theta_raw,
        growth,
    })
}

#[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq)]
pub struct ConstantRow {
    pub lambda: f64,
    pub measure: f64,
    pub c2: f64,
    pub c1: f64,
    pub grid: String,
    pub seed: u64,
}

pub fn write_constant_table<W: std::io::Write>(rows: &[ConstantRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Coefficient vector `x` with `xᵀGx`, handy for cross-checks.
pub fn quadratic_form(g: &GramMatrix, a: &[f64]) -> f64 {
    let v = DVector::from_column_slice(a);
    (v.transpose() * &g.matrix * &v)[(0, 0)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RectDomain;
    use crate::spectral::{solve_modes, Cutoff, Method};

    fn basis(n: usize, j: usize) -> SpectralBasis {
        solve_modes(&RectDomain::unit_square(n, 1.0, 2).unwrap(), Cutoff::Count(j), Method::Dense).unwrap()
    }

    #[test]
    fn full_domain_gram_is_identity() {
        let b = basis(16, 10);
        let lam = b.eigenvalues()[9];
        let g = gram(&b, &SpatialMask::full(*b.domain()), lam).unwrap();
        let id = DMatrix::<f64>::identity(g.size(), g.size());
        assert!((&g.matrix - id).abs().max() < 1e-8);
        let c2 = l2_constant(&b, &SpatialMask::full(*b.domain()), lam).unwrap();
        assert!((c2.value - 1.0).abs() < 1e-4);
    }

    #[test]
    fn single_cell_gram_with_few_modes() {
        let b = basis(16, 4);
        let lam = b.eigenvalues()[3];
        let d = *b.domain();
        let c = d.cell_index(5, 7);
        let one = SpatialMask::from_fn(d, |x, y| d.cell_index((x / d.hx) as usize, (y / d.hy) as usize) == c);
        assert_eq!(one.count(), 1);
        let g = gram(&b, &one, lam).unwrap();
        let (m, _) = g.min_eigen();
        let eig = g.matrix.clone().symmetric_eigen();
        assert!((m - eig.eigenvalues.min()).abs() < 1e-15);
        assert!(m > 0.0, "{m}");
    }

    #[test]
    fn gram_is_additive() {
        let b = basis(16, 6);
        let d = *b.domain();
        let lam = b.eigenvalues()[5];
        let left = SpatialMask::from_fn(d, |x, _| x < 0.3);
        let right = SpatialMask::from_fn(d, |x, y| x > 0.6 && y < 0.5);
        let both = left.union(&right).unwrap();
        let g = gram(&b, &both, lam).unwrap();
        let sum = gram(&b, &left, lam).unwrap().matrix + gram(&b, &right, lam).unwrap().matrix;
        assert!((&g.matrix - sum).abs().max() < 1e-14);
    }

    #[test]
    fn empty_mask_rejected() {
        let b = basis(16, 2);
        let d = *b.domain();
        let empty = SpatialMask::from_fn(d, |_, _| false);
        assert!(matches!(gram(&b, &empty, 200.0), Err(Error::EmptyMask)));
    }

    #[test]
    fn single_mode_l1_is_exact() {
        let b = basis(16, 3);
        let d = *b.domain();
        let (ball, _) = SpatialMask::ball(d, (0.4, 0.5), 0.2).unwrap();
        let lam = b.eigenvalues()[0] * 1.01;
        let est = l1_constant_estimate(&b, &ball, lam, &SubgradientOptions::default()).unwrap();
        let direct = 1.0 / b.mode(0).field.l1_norm_on(&ball);
        assert!((est.ratio - direct).abs() < 1e-12 * direct);
        assert!(est.ratio >= est.floor);
    }

    #[test]
    fn two_mode_l1_matches_angular_scan() {
        let d = RectDomain::unit_square(12, 1.0, 2).unwrap();
        let b = solve_modes(&d, Cutoff::Count(4), Method::Dense).unwrap();
        // modes 1 and 2 only: cutoff between λ_2 = λ_3 is avoided by using λ_1 < Λ < λ_2 on a 2-mode truncation
        let b2 = b.truncated(2).unwrap();
        let lam = b2.eigenvalues()[1];
        let mask = SpatialMask::from_fn(d, |x, y| x < 0.4 && y > 0.3);
        let est = l1_constant_estimate(&b2, &mask, lam, &SubgradientOptions::default()).unwrap();
        let mut best = f64::INFINITY;
        let steps = (std::f64::consts::PI / 1e-3) as usize;
        for s in 0..steps {
            let th = s as f64 * 1e-3;
            let f = synthesize_l1(&b2, &[th.cos(), th.sin()], &mask);
            best = best.min(f);
        }
        let brute = 1.0 / best;
        assert!((est.ratio - brute).abs() <= 1e-3 * brute, "{} vs {}", est.ratio, brute);
        assert!(est.ratio >= brute * (1.0 - 1e-3));
    }

    fn synthesize_l1(b: &SpectralBasis, a: &[f64], mask: &SpatialMask) -> f64 {
        crate::spectral::synthesize_field(b, a).unwrap().l1_norm_on(mask)
    }

    #[test]
    fn growth_fit_recovers_model() {
        let pairs: Vec<(f64, f64)> = [10.0, 40.0, 90.0, 160.0]
            .iter()
            .map(|&l: &f64| (l, 2.0 * (3.0 * l.sqrt()).exp()))
            .collect();
        let fit = growth_fit(&pairs).unwrap();
        assert!((fit.c0 - 2f64.ln()).abs() < 1e-10);
        assert!((fit.c1 - 3.0).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-10);
        let flat = growth_fit(&[(1.0, 5.0), (2.0, 5.0), (3.0, 5.0)]).unwrap();
        assert!(flat.c1.abs() < 1e-14);
        assert!(growth_fit(&pairs[..2]).is_err());
        assert!(growth_fit(&[(1.0, 5.0), (2.0, -1.0), (3.0, 5.0)]).is_err());
    }

    #[test]
    fn restarts_below_eight_rejected() {
        let b = basis(16, 2);
        let full = SpatialMask::full(*b.domain());
        let opts = SubgradientOptions {
            restarts: 4,
            ..Default::default()
        };
        assert!(l1_constant_estimate(&b, &full, 100.0, &opts).is_err());
    }
}

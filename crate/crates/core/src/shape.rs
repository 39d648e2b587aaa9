//! Randomized observability constant and the relaxed optimal sensor-shape
//! problem
//!
//! `max_a min_{j ≤ J} γ_j ∫ a |e_j|²`, `0 ≤ a ≤ 1`, `∫ a = L|Ω|`,
//!
//! with `γ_j = (e^{2Tλ_j} − 1)/(2λ_j)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::SpatialMask;
use crate::lp::{solve, BoundedLp};
use crate::rng::{stream, streams};
use crate::spectral::SpectralBasis;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModalWeightTable {
    pub horizon: f64,
    pub lambdas: Vec<f64>,
    /// `ln γ_j`, finite even where `γ_j` overflows.
    pub log_gammas: Vec<f64>,
    pub gammas: Vec<f64>,
}

/// `ln((e^{2Tλ} − 1)/(2λ))`.
pub fn log_gamma(lambda: f64, t: f64) -> f64 {
    let x = 2.0 * t * lambda;
    if lambda == 0.0 {
        t.ln()
    } else if x > 700.0 {
        x + (-(-x).exp()).ln_1p() - (2.0 * lambda).ln()
    } else {
        (x.exp_m1() / (2.0 * lambda)).ln()
    }
}

pub fn modal_weights(basis: &SpectralBasis, t: f64, j: usize) -> Result<ModalWeightTable> {
    if !(t > 0.0) {
        return Err(invalid("t", format!("must be positive, got {t}")));
    }
    if j == 0 || j > basis.len() {
        return Err(invalid("j", format!("need 1 <= J <= {}, got {j}", basis.len())));
    }
    let lambdas: Vec<f64> = basis.eigenvalues()[..j].to_vec();
    let log_gammas: Vec<f64> = lambdas.iter().map(|&l| log_gamma(l, t)).collect();
    Ok(ModalWeightTable {
        horizon: t,
        gammas: log_gammas.iter().map(|g| g.exp()).collect(),
        log_gammas,
        lambdas,
    })
}

/// `|e_j|²` per cell from the edge quadrature, times the cell area, so that
/// each row sums to `‖e_j‖² = 1`.
pub fn modal_masses(basis: &SpectralBasis, j: usize) -> Vec<Vec<f64>> {
    let area = basis.domain().cell_area();
    (0..j)
        .map(|k| {
            basis
                .mode(k)
                .cell_edges()
                .iter()
                .map(|e| 0.5 * area * e.iter().map(|x| x * x).sum::<f64>())
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignDensity {
    pub values: Vec<f64>,
    pub fraction: f64,
}

impl DesignDensity {
    pub fn new(values: Vec<f64>, fraction: f64, cell_area: f64, area: f64) -> Result<Self> {
        if let Some(c) = values.iter().position(|a| !(0.0..=1.0).contains(a)) {
            return Err(invalid("design", format!("density {} at cell {c} outside [0, 1]", values[c])));
        }
        let vol: f64 = values.iter().sum::<f64>() * cell_area;
        if (vol - fraction * area).abs() > 1e-9 * area {
            return Err(invalid("design", format!("volume {vol} differs from L|Ω| = {}", fraction * area)));
        }
        Ok(Self { values, fraction })
    }

    /// Constant density `L`.
    pub fn uniform(basis: &SpectralBasis, fraction: f64) -> Result<Self> {
        let d = basis.domain();
        Self::new(vec![fraction; d.n_cells()], fraction, d.cell_area(), d.area())
    }

    pub fn indicator(mask: &SpatialMask) -> Result<Self> {
        let d = mask.domain();
        let values: Vec<f64> = mask.indicator().iter().map(|&b| f64::from(u8::from(b))).collect();
        Self::new(values, mask.measure() / d.area(), d.cell_area(), d.area())
    }

    /// Cells with `a ∈ (1e−6, 1 − 1e−6)`.
    pub fn fractional_cells(&self) -> usize {
        self.values.iter().filter(|&&a| a > 1e-6 && a < 1.0 - 1e-6).count()
    }
}

fn masses_of(masses: &[Vec<f64>], a: &[f64]) -> Vec<f64> {
    masses.iter().map(|m| m.iter().zip(a).map(|(x, y)| x * y).sum()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrandValue {
    pub value: f64,
    /// Active mode, 0-based.
    pub argmin: usize,
    /// `∫ a|e_j|²` for `j < J`.
    pub masses: Vec<f64>,
}

pub fn evaluate_crand(basis: &SpectralBasis, design: &DesignDensity, t: f64, j: usize) -> Result<CrandValue> {
    basis_cells(basis, design)?;
    let w = modal_weights(basis, t, j)?;
    let masses = masses_of(&modal_masses(basis, j), &design.values);
    let mut argmin = 0;
    let mut value = f64::INFINITY;
    for (k, (g, m)) in w.gammas.iter().zip(&masses).enumerate() {
        if g * m < value {
            value = g * m;
            argmin = k;
        }
    }
    Ok(CrandValue { value, argmin, masses })
}

fn basis_cells(basis: &SpectralBasis, design: &DesignDensity) -> Result<()> {
    let n = basis.domain().n_cells();
    if design.values.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: design.values.len(),
        });
    }
    Ok(())
}

/// Sum of the `k` largest entries with fractional `k` (the last one
/// counted partially), i.e. `max { vᵀa : 0 ≤ a ≤ 1, Σa = k }`.
pub fn top_sum(v: &[f64], k: f64) -> f64 {
    let mut s: Vec<f64> = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let whole = k.floor() as usize;
    let mut total: f64 = s.iter().take(whole).sum();
    if whole < s.len() {
        total += (k - whole as f64) * s[whole];
    }
    total
}

#[derive(Debug, Clone, Serialize)]
pub struct RelaxedDesign {
    pub design: DesignDensity,
    pub horizon: f64,
    pub modes: usize,
    pub objective: f64,
    /// Independent upper bound from the LP multipliers.
    pub dual_bound: f64,
    /// `(dual_bound − objective)/objective`.
    pub gap: f64,
    /// Modes (0-based) whose constraint is tight.
    pub active: Vec<usize>,
    pub fractional: usize,
    pub multipliers: Vec<f64>,
    pub iterations: usize,
}

/// Solves the relaxed design LP by simplex and certifies it with the dual
/// bound `topK(Σ_j y_j γ_j m_j) / Σ_j y_j`.
pub fn solve_relaxed_design(basis: &SpectralBasis, t: f64, fraction: f64, j: usize) -> Result<RelaxedDesign> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(invalid("L", format!("volume fraction must lie in (0, 1), got {fraction}")));
    }
    let w = modal_weights(basis, t, j)?;
    let masses = modal_masses(basis, j);
    let d = basis.domain();
    let n = d.n_cells();
    let k = fraction * n as f64;

    // variables: a_c (n), s, slack e_j (J); t = γ_1 s; rows scaled by n / γ_j
    let nvar = n + 1 + j;
    let mut rows = Vec::with_capacity(j + 1);
    for (r, m) in masses.iter().enumerate() {
        let mut row = vec![0.0; nvar];
        for c in 0..n {
            row[c] = n as f64 * m[c];
        }
        row[n] = -(n as f64) * (w.log_gammas[0] - w.log_gammas[r]).exp();
        row[n + 1 + r] = -1.0;
        rows.push(row);
    }
    let mut vol = vec![0.0; nvar];
    vol[..n].iter_mut().for_each(|x| *x = 1.0);
    rows.push(vol);
    let mut rhs = vec![0.0; j];
    rhs.push(k);
    let mut cost = vec![0.0; nvar];
    cost[n] = -1.0;
    let mut upper = vec![1.0; n];
    upper.extend(std::iter::repeat_n(f64::INFINITY, j + 1));
    let lp = BoundedLp { rows, rhs, cost, upper };
    let sol = solve(&lp)?;

    let values: Vec<f64> = sol.x[..n].iter().map(|a| a.clamp(0.0, 1.0)).collect();
    let design = DesignDensity::new(values, fraction, d.cell_area(), d.area())?;
    let eval = evaluate_crand(basis, &design, t, j)?;
    let objective = eval.value;

    // multipliers y_r ≥ 0 of the scaled rows m_r(a) ≥ (γ_1/γ_r) s give
    // t ≤ γ_1 topK(Σ_r y_r m_r) / Σ_r y_r γ_1/γ_r
    let y: Vec<f64> = sol.duals[..j].iter().map(|v| v.max(0.0)).collect();
    let weight: f64 = (0..j).map(|r| y[r] * (w.log_gammas[0] - w.log_gammas[r]).exp()).sum();
    let dual_bound = if weight > 0.0 {
        let combined: Vec<f64> = (0..n).map(|c| (0..j).map(|r| y[r] * masses[r][c]).sum()).collect();
        w.gammas[0] * top_sum(&combined, k) / weight
    } else {
        f64::INFINITY
    };
    let active = (0..j)
        .filter(|&r| w.gammas[r] * eval.masses[r] <= objective * (1.0 + 1e-9))
        .collect();
    Ok(RelaxedDesign {
        fractional: design.fractional_cells(),
        design,
        horizon: t,
        modes: j,
        objective,
        dual_bound,
        gap: (dual_bound - objective) / objective,
        active,
        multipliers: y,
        iterations: sol.iterations,
    })
}

/// Single-constraint optimum: the `L`-quantile of cells by `|e_1|²`.
pub fn greedy_design(basis: &SpectralBasis, t: f64, fraction: f64) -> Result<(DesignDensity, f64)> {
    let masses = modal_masses(basis, 1).remove(0);
    let d = basis.domain();
    let n = d.n_cells();
    let k = fraction * n as f64;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| masses[b].total_cmp(&masses[a]).then(a.cmp(&b)));
    let mut values = vec![0.0; n];
    let whole = k.floor() as usize;
    for &c in &order[..whole] {
        values[c] = 1.0;
    }
    if whole < n {
        values[order[whole]] = k - whole as f64;
    }
    let gamma = log_gamma(basis.eigenvalues()[0], t).exp();
    Ok((
        DesignDensity::new(values, fraction, d.cell_area(), d.area())?,
        gamma * top_sum(&masses, k),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationVerdict {
    pub passed: bool,
    /// `min_{j > J} γ_j ∫ a|e_j|² / v*`.
    pub margin: f64,
    /// First failing mode, 0-based.
    pub first_violation: Option<usize>,
    /// No modes beyond `J` were available.
    pub uncertified_tail: bool,
}

/// Checks `γ_j ∫ a*|e_j|² > v*` for every computed mode beyond `J`.
pub fn truncation_certificate(
    basis: &SpectralBasis,
    t: f64,
    j: usize,
    design: &DesignDensity,
    objective: f64,
) -> Result<TruncationVerdict> {
    basis_cells(basis, design)?;
    if j > basis.len() {
        return Err(Error::BasisTooSmall(format!("J = {j} exceeds the {} computed modes", basis.len())));
    }
    if j == basis.len() {
        log::warn!("truncation at J = {j} uses every computed mode; tail uncertified");
        return Ok(TruncationVerdict {
            passed: true,
            margin: f64::INFINITY,
            first_violation: None,
            uncertified_tail: true,
        });
    }
    let all = basis.len();
    let w = modal_weights(basis, t, all)?;
    let masses = masses_of(&modal_masses(basis, all), &design.values);
    let mut margin = f64::INFINITY;
    let mut first_violation = None;
    for r in j..all {
        let ratio = w.gammas[r] * masses[r] / objective;
        margin = margin.min(ratio);
        if ratio <= 1.0 && first_violation.is_none() {
            first_violation = Some(r);
        }
    }
    Ok(TruncationVerdict {
        passed: first_violation.is_none(),
        margin,
        first_violation,
        uncertified_tail: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Law {
    Gaussian,
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarlo {
    pub mean: f64,
    pub std_err: f64,
    pub closed_form: f64,
    pub z_score: f64,
    pub samples: usize,
}

const MC_BLOCK: usize = 1000;

/// `E ∫_0^T ∫ a|z^ν|²` for `z^ν(0) = Σ β_j a_j e_j` with i.i.d. `β_j`,
/// by sampling against `Σ a_j² (1 − e^{−2Tλ_j})/(2λ_j) ∫ a|e_j|²`.
pub fn randomized_constant_mc(
    basis: &SpectralBasis,
    design: &DesignDensity,
    coeffs: &[f64],
    t: f64,
    samples: usize,
    seed: u64,
    law: Law,
) -> Result<MonteCarlo> {
    basis_cells(basis, design)?;
    basis.check_len(coeffs)?;
    if samples < 100 {
        return Err(invalid("samples", format!("need at least 100, got {samples}")));
    }
    let k = basis.len();
    let lambdas = basis.eigenvalues();
    let area = basis.domain().cell_area();
    let edges: Vec<&[[f64; 4]]> = (0..k).map(|j| basis.mode(j).cell_edges()).collect();
    // W_ij = a_i a_j G^a_ij (1 − e^{−(λ_i+λ_j)T})/(λ_i+λ_j)
    let mut w = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            if coeffs[i] == 0.0 || coeffs[j] == 0.0 {
                continue;
            }
            let g: f64 = design
                .values
                .iter()
                .enumerate()
                .filter(|(_, &a)| a != 0.0)
                .map(|(c, &a)| {
                    let (ei, ej) = (edges[i][c], edges[j][c]);
                    a * 0.5 * area * (0..4).map(|e| ei[e] * ej[e]).sum::<f64>()
                })
                .sum();
            let s = lambdas[i] + lambdas[j];
            let time = -(-s * t).exp_m1() / s;
            w[i * k + j] = coeffs[i] * coeffs[j] * g * time;
            w[j * k + i] = w[i * k + j];
        }
    }
    let closed_form: f64 = (0..k).map(|i| w[i * k + i]).sum();

    let blocks = samples.div_ceil(MC_BLOCK);
    let sums: Vec<(f64, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, streams::MC_BLOCK + b as u64);
            let count = MC_BLOCK.min(samples - b * MC_BLOCK);
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            let mut beta = vec![0.0; k];
            for _ in 0..count {
                for x in beta.iter_mut() {
                    *x = draw(&mut rng, law);
                }
                let mut v = 0.0;
                for i in 0..k {
                    let row = &w[i * k..(i + 1) * k];
                    v += beta[i] * row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
                }
                s1 += v;
                s2 += v * v;
            }
            (s1, s2)
        })
        .collect();
    let (s1, s2) = sums.iter().fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    let nf = samples as f64;
    let mean = s1 / nf;
    let var = ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
    let std_err = (var / nf).sqrt();
    let diff = mean - closed_form;
    let z_score = if std_err > 0.0 {
        diff / std_err
    } else if diff.abs() <= 1e-12 * closed_form.abs().max(f64::MIN_POSITIVE) {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    Ok(MonteCarlo {
        mean,
        std_err,
        closed_form,
        z_score,
        samples,
    })
}

fn draw(rng: &mut rand_chacha::ChaCha8Rng, law: Law) -> f64 {
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};
    match law {
        Law::Gaussian => StandardNormal.sample(rng),
        Law::Bernoulli => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
    }
}

/// Sample variance over the cells of `mask` of `Σ_j β_j |e_j|²`.
pub fn eigen_sum_variance(basis: &SpectralBasis, beta: &[f64], mask: &SpatialMask) -> Result<f64> {
    basis.check_len(beta)?;
    let masses = modal_masses(basis, basis.len());
    let vals: Vec<f64> = mask
        .cells()
        .map(|c| beta.iter().zip(&masses).map(|(b, m)| b * m[c]).sum())
        .collect();
    if vals.len() < 2 {
        return Err(Error::EmptyMask);
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    Ok(vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64)
}

/// `(j, γ_j, ∫ a|e_j|²)` rows, 1-based `j`.
pub fn write_mode_table<W: std::io::Write>(basis: &SpectralBasis, design: &DesignDensity, t: f64, j: usize, out: W) -> Result<()> {
    let eval = evaluate_crand(basis, design, t, j)?;
    let w = modal_weights(basis, t, j)?;
    let mut wr = csv::Writer::from_writer(out);
    wr.write_record(["j", "gamma", "mass"])?;
    for r in 0..j {
        wr.write_record([(r + 1).to_string(), format!("{:e}", w.gammas[r]), format!("{:e}", eval.masses[r])])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RectDomain;
    use crate::spectral::{solve_modes, Cutoff, Method};

    fn basis(n: usize, k: usize) -> SpectralBasis {
        let d = RectDomain::unit_square(n, 1.0, 2).unwrap();
        solve_modes(&d, Cutoff::Count(k), Method::Dense).unwrap()
    }

    #[test]
    fn weights_closed_form() {
        assert!((log_gamma(1.0, 1.0).exp() - 3.194_528_049_465_325).abs() < 1e-12);
        assert!((log_gamma(50.0, 1e-8).exp() / 1e-8 - 1.0).abs() < 1e-6);
        let big = log_gamma(1000.0, 1.0);
        assert!((big - (2000.0 - 2000f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn masses_sum_to_one() {
        let b = basis(12, 6);
        for row in modal_masses(&b, 6) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_design_value() {
        let b = basis(12, 6);
        let u = DesignDensity::uniform(&b, 0.3).unwrap();
        let v = evaluate_crand(&b, &u, 0.1, 6).unwrap();
        let w = modal_weights(&b, 0.1, 6).unwrap();
        assert!((v.value - 0.3 * w.gammas[0]).abs() < 1e-12 * v.value);
        let full = DesignDensity::uniform(&b, 1.0).unwrap();
        assert!((evaluate_crand(&b, &full, 0.1, 6).unwrap().value - w.gammas[0]).abs() < 1e-12 * w.gammas[0]);
    }

    #[test]
    fn top_sum_fractional() {
        assert_eq!(top_sum(&[1.0, 4.0, 2.0, 3.0], 2.5), 4.0 + 3.0 + 1.0);
    }

    #[test]
    fn design_invariants_enforced() {
        let b = basis(8, 2);
        let n = b.domain().n_cells();
        assert!(DesignDensity::new(vec![1.5; n], 1.0, b.domain().cell_area(), 1.0).is_err());
        assert!(DesignDensity::new(vec![0.5; n], 0.4, b.domain().cell_area(), 1.0).is_err());
    }

    #[test]
    fn single_mode_lp_is_the_quantile() {
        let b = basis(16, 8);
        for l in [0.1, 0.25, 0.5] {
            let r = solve_relaxed_design(&b, 0.05, l, 1).unwrap();
            let (g, v) = greedy_design(&b, 0.05, l).unwrap();
            assert!((r.objective - v).abs() <= 1e-12 * v, "{} vs {v}", r.objective);
            let ev = evaluate_crand(&b, &g, 0.05, 1).unwrap().value;
            assert!((ev - v).abs() <= 1e-12 * v);
        }
    }

    #[test]
    fn relaxed_design_certificates() {
        let b = basis(16, 12);
        let mut last = 0.0;
        for l in [0.1, 0.2, 0.4] {
            for (t, j) in [(0.05, 8), (1e-3, 5), (1e-3, 10)] {
                let r = solve_relaxed_design(&b, t, l, j).unwrap();
                assert!(r.gap.abs() <= 1e-7, "gap {} at T={t} J={j} L={l}", r.gap);
                assert!(r.fractional <= j + 1, "{} fractional cells", r.fractional);
                assert!(!r.active.is_empty());
                if (t, j) == (0.05, 8) {
                    assert!(r.objective > last);
                    last = r.objective;
                }
            }
        }
    }

    #[test]
    fn relaxed_design_rejects_bad_fraction() {
        let b = basis(8, 2);
        for l in [0.0, 1.0, -0.3] {
            match solve_relaxed_design(&b, 0.1, l, 1) {
                Err(Error::InvalidArgument { name, .. }) => assert_eq!(name, "L"),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn truncation_margins() {
        let b = basis(16, 12);
        let r = solve_relaxed_design(&b, 1.0, 0.2, 5).unwrap();
        let v = truncation_certificate(&b, 1.0, 5, &r.design, r.objective).unwrap();
        assert!(v.passed && v.margin >= 10.0 && !v.uncertified_tail);
        // short horizons flatten the weights
        let r = solve_relaxed_design(&b, 1e-3, 0.2, 5).unwrap();
        let v = truncation_certificate(&b, 1e-3, 5, &r.design, r.objective).unwrap();
        assert!(!v.passed && v.first_violation.is_some());
        let r = solve_relaxed_design(&b, 1e-3, 0.2, 12).unwrap();
        let v = truncation_certificate(&b, 1e-3, 12, &r.design, r.objective).unwrap();
        assert!(v.passed && v.uncertified_tail);
    }

    #[test]
    fn monte_carlo_matches_closed_form() {
        let b = basis(16, 10);
        let design = solve_relaxed_design(&b, 0.05, 0.2, 6).unwrap().design;
        let a: Vec<f64> = (0..10).map(|i| 1.0 / (1.0 + i as f64)).collect();
        for law in [Law::Gaussian, Law::Bernoulli] {
            let mc = randomized_constant_mc(&b, &design, &a, 0.05, 10_000, 3, law).unwrap();
            assert!(mc.z_score.abs() <= 4.0, "{law:?}: {mc:?}");
            assert!(mc.std_err > 0.0);
            let big = randomized_constant_mc(&b, &design, &a, 0.05, 40_000, 3, law).unwrap();
            let ratio = mc.std_err / big.std_err;
            assert!((ratio - 2.0).abs() < 0.3, "{law:?} ratio {ratio}");
        }
        let again = randomized_constant_mc(&b, &design, &a, 0.05, 10_000, 3, Law::Gaussian).unwrap();
        let first = randomized_constant_mc(&b, &design, &a, 0.05, 10_000, 3, Law::Gaussian).unwrap();
        assert_eq!(again.mean.to_bits(), first.mean.to_bits());
    }
}

//! Dual functional for minimal-norm controls and the controls it generates.
//!
//! For adjoint terminal data `b`, `φ_b = Σ b_j κ_j(t) e_j` on a
//! [`SampleSet`], `N(b) = ∫∫ |φ_b|_{r′}` and
//!
//! `J(b) = ½ N(b)² + ⟨c, b⟩`, with `c = e^{−ΛT} u0`.
//!
//! At the minimizer `b*`, `v = N(b*) · duality_map(φ_{b*}, r)` steers `u0` to
//! zero and `|v|_r ≤ N(b*)` pointwise, so `N(b*)` is the smallest admissible
//! bound. `J` is minimized by damped Newton on smooth surrogates of the
//! pointwise norm: exact for `r′ ∈ (1, ∞)`, smoothed absolute values for
//! `r′ = 1` and large finite exponents for `r′ = ∞`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::MaskDocument;
use crate::linalg::{dot, norm};
use crate::rng::{stream, streams, unit_vec};
use crate::rnorm::{conjugate, duality_map, p_norm, RNorm};
use crate::spacetime::SampleSet;

/// Pointwise integrands `f(φ)` on `φ ∈ R²` used by the Newton stages.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Integrand {
    Power(f64),
    /// `Σ_i √(φ_i² + ε²)`.
    SmoothAbs(f64),
}

type Local = (f64, [f64; 2], [f64; 3]);

fn local(kind: Integrand, phi: [f64; 2]) -> Local {
    match kind {
        Integrand::SmoothAbs(eps) => {
            let mut f = 0.0;
            let mut s = [0.0; 2];
            let mut h = [0.0; 3];
            for i in 0..2 {
                let r = (phi[i] * phi[i] + eps * eps).sqrt();
                f += r;
                s[i] = phi[i] / r;
                h[2 * i] = eps * eps / (r * r * r);
            }
            (f, s, h)
        }
        Integrand::Power(p) => {
            let f = p_norm(&phi, p);
            if f == 0.0 {
                return (0.0, [0.0; 2], [0.0; 3]);
            }
            if p == 2.0 {
                let s = [phi[0] / f, phi[1] / f];
                return (f, s, [(1.0 - s[0] * s[0]) / f, -s[0] * s[1] / f, (1.0 - s[1] * s[1]) / f]);
            }
            // ratios are clamped away from zero so that p < 2 keeps a finite Hessian
            let t = [(phi[0].abs() / f).max(1e-8), (phi[1].abs() / f).max(1e-8)];
            let sg = [phi[0].signum(), phi[1].signum()];
            let s = [sg[0] * t[0].powf(p - 1.0), sg[1] * t[1].powf(p - 1.0)];
            let c = (p - 1.0) / f;
            let hxx = c * (t[0].powf(p - 2.0) - t[0].powf(2.0 * p - 2.0));
            let hyy = c * (t[1].powf(p - 2.0) - t[1].powf(2.0 * p - 2.0));
            let hxy = -c * s[0] * s[1];
            (f, s, [hxx, hxy, hyy])
        }
    }
}

struct Eval {
    n: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

fn evaluate(set: &SampleSet, b: &[f64], kind: Integrand, with_hess: bool) -> Eval {
    let k = set.modes();
    let area = set.cell_area();
    let parts: Vec<Eval> = set
        .samples()
        .par_iter()
        .map(|s| {
            let beta: Vec<f64> = b.iter().zip(&s.kernel).map(|(a, q)| a * q).collect();
            let mut n = 0.0;
            let mut g = vec![0.0; k];
            let mut h = if with_hess { vec![0.0; k * k] } else { Vec::new() };
            let mut u = vec![0.0; k];
            let mut w = vec![0.0; k];
            for &c in &s.cells {
                let (x, y) = set.cell_row(c);
                let phi = [dot(x, &beta), dot(y, &beta)];
                let (f, sv, hv) = local(kind, phi);
                n += f;
                for i in 0..k {
                    g[i] += sv[0] * x[i] + sv[1] * y[i];
                }
                if with_hess {
                    for i in 0..k {
                        u[i] = hv[0] * x[i] + hv[1] * y[i];
                        w[i] = hv[1] * x[i] + hv[2] * y[i];
                    }
                    for i in 0..k {
                        let row = &mut h[i * k..i * k + i + 1];
                        for (j, hij) in row.iter_mut().enumerate() {
                            *hij += u[i] * x[j] + w[i] * y[j];
                        }
                    }
                }
            }
            let scale = s.weight * area;
            for i in 0..k {
                g[i] *= scale * s.kernel[i];
            }
            if with_hess {
                for i in 0..k {
                    for j in 0..=i {
                        h[i * k + j] *= scale * s.kernel[i] * s.kernel[j];
                    }
                }
            }
            Eval { n: n * scale, grad: g, hess: h }
        })
        .collect();
    let mut total = Eval {
        n: 0.0,
        grad: vec![0.0; k],
        hess: if with_hess { vec![0.0; k * k] } else { Vec::new() },
    };
    for p in parts {
        total.n += p.n;
        total.grad.iter_mut().zip(&p.grad).for_each(|(a, x)| *a += x);
        total.hess.iter_mut().zip(&p.hess).for_each(|(a, x)| *a += x);
    }
    if with_hess {
        for i in 0..k {
            for j in 0..i {
                total.hess[j * k + i] = total.hess[i * k + j];
            }
        }
    }
    total
}

/// `N(b) = ∫∫ |φ_b|_{r′}` with the exact pointwise norm.
pub fn dual_norm(set: &SampleSet, b: &[f64], r: f64) -> f64 {
    set.l1(b, conjugate(r))
}

/// `J(b) = ½ N(b)² + ⟨c, b⟩`.
pub fn dual_objective(set: &SampleSet, c: &[f64], b: &[f64], r: f64) -> f64 {
    let n = dual_norm(set, b, r);
    0.5 * n * n + dot(c, b)
}

#[derive(Debug, Clone)]
pub struct DualOptions {
    /// Newton iterations per smoothing stage.
    pub max_iter: usize,
    /// Stop once `‖∇J‖ ≤ gtol · ‖c‖`.
    pub gtol: f64,
    pub seed: u64,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            gtol: 1e-13,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DualSolution {
    pub b: Vec<f64>,
    /// `N(b*)`, the minimal pointwise bound.
    pub n_value: f64,
    pub objective: f64,
    /// `‖∇J‖` of the last smooth stage; equals the steering defect.
    pub grad_norm: f64,
    pub iterations: usize,
    /// `‖∇J‖` after every Newton step.
    pub history: Vec<f64>,
    pub converged: bool,
    pub stalled: bool,
}

fn stages(r: f64) -> Vec<Integrand> {
    let q = conjugate(r);
    if q == 1.0 {
        [1e-2, 1e-4, 1e-6, 1e-8].iter().map(|&e| Integrand::SmoothAbs(e)).collect()
    } else if q.is_infinite() {
        [4.0, 16.0, 64.0, 256.0].iter().map(|&p| Integrand::Power(p)).collect()
    } else if q == 2.0 {
        vec![Integrand::Power(2.0)]
    } else {
        vec![Integrand::Power(2.0), Integrand::Power(q)]
    }
}

fn newton_direction(hess: &[f64], grad: &[f64], k: usize) -> Vec<f64> {
    let h = DMatrix::from_row_slice(k, k, hess);
    let g = DVector::from_column_slice(grad);
    let scale = (0..k).map(|i| hess[i * k + i].abs()).fold(0.0, f64::max).max(1e-300);
    let mut mu = 0.0;
    for _ in 0..30 {
        let mut m = h.clone();
        for i in 0..k {
            m[(i, i)] += mu;
        }
        if let Some(ch) = m.cholesky() {
            let d = ch.solve(&(-&g));
            if d.iter().all(|x| x.is_finite()) {
                return d.as_slice().to_vec();
            }
        }
        mu = if mu == 0.0 { 1e-14 * scale } else { mu * 100.0 };
    }
    grad.iter().map(|x| -x).collect()
}

/// Minimizes `J` over adjoint terminal data.
pub fn solve_dual(set: &SampleSet, c: &[f64], r: f64, opts: &DualOptions) -> Result<DualSolution> {
    RNorm::new(r)?;
    let k = set.modes();
    if c.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: c.len() });
    }
    if set.entries() == 0 {
        return Err(Error::EmptyMask);
    }
    let cn = norm(c);
    if cn == 0.0 {
        return Ok(DualSolution {
            b: vec![0.0; k],
            n_value: 0.0,
            objective: 0.0,
            grad_norm: 0.0,
            iterations: 0,
            history: Vec::new(),
            converged: true,
            stalled: false,
        });
    }

    let stage_list = stages(r);
    let scale_of = |b: &[f64]| -> f64 {
        (0..set.samples().len())
            .flat_map(|q| set.field(q, b))
            .fold(0.0, |m, v| m.max(v[0].abs()).max(v[1].abs()))
    };

    // start on the ray minimizing J along a perturbed −c
    let mut rng = stream(opts.seed, streams::HUM_INIT);
    let jitter = unit_vec(&mut rng, k);
    let mut d: Vec<f64> = c.iter().zip(&jitter).map(|(ci, z)| -ci / cn + 0.25 * z).collect();
    if dot(c, &d) >= 0.0 {
        d = c.iter().map(|x| -x).collect();
    }
    let first = match stage_list[0] {
        Integrand::SmoothAbs(e) => Integrand::SmoothAbs(e * scale_of(&d)),
        other => other,
    };
    let nd = evaluate(set, &d, first, false).n;
    if !(nd > 0.0) {
        return Err(Error::Degenerate("adjoint field vanishes on the set".into()));
    }
    let t = -dot(c, &d) / (nd * nd);
    let mut b: Vec<f64> = d.iter().map(|x| x * t).collect();

    let mut history = Vec::new();
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    let mut stalled = false;
    for stage in stage_list {
        let kind = match stage {
            Integrand::SmoothAbs(e) => Integrand::SmoothAbs(e * scale_of(&b)),
            other => other,
        };
        let jval = |b: &[f64]| {
            let n = evaluate(set, b, kind, false).n;
            0.5 * n * n + dot(c, b)
        };
        stalled = false;
        let stage_start = history.len();
        for _ in 0..opts.max_iter {
            let e = evaluate(set, &b, kind, true);
            let grad: Vec<f64> = (0..k).map(|i| e.n * e.grad[i] + c[i]).collect();
            grad_norm = norm(&grad);
            if grad_norm <= opts.gtol * cn {
                break;
            }
            let mut hess = e.hess;
            for i in 0..k {
                for j in 0..k {
                    hess[i * k + j] = hess[i * k + j] * e.n + e.grad[i] * e.grad[j];
                }
            }
            let mut dir = newton_direction(&hess, &grad, k);
            let mut slope = dot(&grad, &dir);
            if !(slope < 0.0) {
                dir = grad.iter().map(|x| -x).collect();
                slope = -grad_norm * grad_norm;
            }
            let j0 = 0.5 * e.n * e.n + dot(c, &b);
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let trial: Vec<f64> = b.iter().zip(&dir).map(|(x, d)| x + alpha * d).collect();
                let jt = jval(&trial);
                if jt <= j0 + 1e-4 * alpha * slope {
                    accepted = Some(trial);
                    break;
                }
                alpha *= 0.5;
            }
            iterations += 1;
            match accepted {
                Some(trial) => b = trial,
                None => {
                    // rounding floor of J reached; keep the best point
                    history.push(grad_norm);
                    stalled = true;
                    break;
                }
            }
            let e = evaluate(set, &b, kind, false);
            let g: Vec<f64> = (0..k).map(|i| e.n * e.grad[i] + c[i]).collect();
            grad_norm = norm(&g);
            history.push(grad_norm);
            // twenty steps without a tenth off the gradient: rounding plateau
            let h = &history[stage_start..];
            if h.len() > 20 && grad_norm > 0.9 * h[h.len() - 21] {
                break;
            }
        }
    }
    let n_value = dual_norm(set, &b, r);
    let objective = 0.5 * n_value * n_value + dot(c, &b);
    Ok(DualSolution {
        converged: grad_norm <= 1e-8 * cn,
        b,
        n_value,
        objective,
        grad_norm,
        iterations,
        history,
        stalled,
    })
}

/// Relative threshold below which `|φ|_{r′}` counts as vanishing.
pub const ZERO_ZONE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlEntry {
    pub sample: usize,
    pub cell: usize,
    pub value: [f64; 2],
}

/// Control values on the marked entries of a sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    #[serde(with = "crate::rnorm::exponent")]
    pub r: f64,
    pub bound: f64,
    pub horizon: f64,
    pub support: MaskDocument,
    /// Representative time and time weight per sample.
    pub times: Vec<f64>,
    pub weights: Vec<f64>,
    /// Grid step (or quadrature panel) per sample.
    pub steps: Vec<usize>,
    pub cell_area: f64,
    pub entries: Vec<ControlEntry>,
    /// Entries where the adjoint vanished and the control was set to zero.
    pub excluded: usize,
    pub excluded_measure: f64,
}

impl ControlSignal {
    /// Checks support against `set` and the pointwise bound.
    pub fn new(
        set: &SampleSet,
        support: MaskDocument,
        r: f64,
        bound: f64,
        entries: Vec<ControlEntry>,
        excluded: usize,
        excluded_measure: f64,
    ) -> Result<Self> {
        RNorm::new(r)?;
        let s = Self {
            r,
            bound,
            horizon: set.horizon(),
            support,
            times: set.samples().iter().map(|s| s.t).collect(),
            weights: set.samples().iter().map(|s| s.weight).collect(),
            steps: set.samples().iter().map(|s| s.step).collect(),
            cell_area: set.cell_area(),
            entries,
            excluded,
            excluded_measure,
        };
        for e in &s.entries {
            let ok = set.samples().get(e.sample).is_some_and(|q| q.cells.binary_search(&e.cell).is_ok());
            if !ok {
                return Err(invalid("control", format!("entry ({}, {}) lies off the support", e.sample, e.cell)));
            }
        }
        s.check_bound()?;
        Ok(s)
    }

    pub fn check_bound(&self) -> Result<()> {
        let limit = self.bound * (1.0 + 1e-9);
        for e in &self.entries {
            let m = p_norm(&e.value, self.r);
            if !(m <= limit) {
                return Err(invalid(
                    "control",
                    format!("|v|_r = {m} exceeds the bound {} at sample {}, cell {}", self.bound, e.sample, e.cell),
                ));
            }
        }
        Ok(())
    }

    /// Zero control on no entries.
    pub fn zero(set: &SampleSet, support: MaskDocument, r: f64) -> Result<Self> {
        Self::new(set, support, r, 0.0, Vec::new(), 0, 0.0)
    }

    pub fn max_norm(&self) -> f64 {
        self.entries.iter().map(|e| p_norm(&e.value, self.r)).fold(0.0, f64::max)
    }

    /// Values keyed by grid (step, cell); meaningful for step-based sets.
    pub fn value_at(&self, step: usize, cell: usize) -> [f64; 2] {
        self.entries
            .iter()
            .find(|e| self.steps[e.sample] == step && e.cell == cell)
            .map_or([0.0; 2], |e| e.value)
    }

    /// `∫∫ |v − w|_1` over the shared entries.
    pub fn l1_distance(&self, other: &ControlSignal) -> Result<f64> {
        if self.times != other.times || self.entries.len() != other.entries.len() {
            return Err(invalid("control", "controls live on different sample sets"));
        }
        let mut d = 0.0;
        for (a, b) in self.entries.iter().zip(&other.entries) {
            if a.sample != b.sample || a.cell != b.cell {
                return Err(invalid("control", "entry layouts differ"));
            }
            d += self.weights[a.sample]
                * self.cell_area
                * ((a.value[0] - b.value[0]).abs() + (a.value[1] - b.value[1]).abs());
        }
        Ok(d)
    }

    /// `∫∫ |v|_1`.
    pub fn l1_mass(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| self.weights[e.sample] * self.cell_area * (e.value[0].abs() + e.value[1].abs()))
            .sum()
    }

    /// Fraction of entries with `||v|_r − M| > εM`.
    pub fn bang_bang_fraction(&self, bound: f64, eps: f64) -> f64 {
        let total = self.entries.len() + self.excluded;
        if total == 0 {
            return 0.0;
        }
        let off = self
            .entries
            .iter()
            .filter(|e| (p_norm(&e.value, self.r) - bound).abs() > eps * bound)
            .count();
        off as f64 / total as f64
    }
}

/// Control generated by `b`: `v = N(b) · duality_map(φ_b, r)`.
pub fn control_from_dual(set: &SampleSet, support: MaskDocument, b: &[f64], r: f64) -> Result<ControlSignal> {
    let bound = dual_norm(set, b, r);
    if bound == 0.0 {
        return ControlSignal::zero(set, support, r);
    }
    let q = conjugate(r);
    let fields: Vec<Vec<[f64; 2]>> = (0..set.samples().len()).map(|s| set.field(s, b)).collect();
    let peak = fields.iter().flatten().map(|v| p_norm(v, q)).fold(0.0, f64::max);
    let mut entries = Vec::with_capacity(set.entries());
    let mut excluded = 0;
    let mut excluded_measure = 0.0;
    for (qi, (s, f)) in set.samples().iter().zip(&fields).enumerate() {
        for (&c, phi) in s.cells.iter().zip(f) {
            if p_norm(phi, q) < ZERO_ZONE * peak {
                excluded += 1;
                excluded_measure += s.weight * set.cell_area();
                entries.push(ControlEntry { sample: qi, cell: c, value: [0.0; 2] });
                continue;
            }
            let u = duality_map(phi, r)?;
            entries.push(ControlEntry {
                sample: qi,
                cell: c,
                value: [bound * u[0], bound * u[1]],
            });
        }
    }
    ControlSignal::new(set, support, r, bound, entries, excluded, excluded_measure)
}

/// Terminal modal coefficients of `u' = −Λu + P(v)` from `u0`, with the
/// Duhamel integral evaluated on the sample set.
pub fn terminal_state(set: &SampleSet, u0: &[f64], control: &ControlSignal) -> Result<Vec<f64>> {
    let k = set.modes();
    if u0.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: u0.len() });
    }
    if control.times.len() != set.samples().len() {
        return Err(invalid("control", "sample count differs from the set"));
    }
    let t = set.horizon();
    let mut out: Vec<f64> = u0.iter().zip(set.lambdas()).map(|(a, l)| a * (-l * t).exp()).collect();
    for e in &control.entries {
        let s = &set.samples()[e.sample];
        let (x, y) = set.cell_row(e.cell);
        let w = s.weight * set.cell_area();
        for j in 0..k {
            out[j] += w * s.kernel[j] * (e.value[0] * x[j] + e.value[1] * y[j]);
        }
    }
    Ok(out)
}

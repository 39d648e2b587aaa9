//! Minimal-time control under a pointwise bound `|v(x, t)|_r ≤ M` on a
//! cylinder `ω × (0, τ)`.
//!
//! For a fixed horizon the smallest admissible bound `M_min(τ)` is the
//! optimal value `N(b*)` of the dual functional
//! `J_τ(b) = ½ (∫_0^τ ∫_ω |φ_b|_{r′})² + ⟨e^{−Λτ} u0, b⟩`; `M_min` is
//! nonincreasing in `τ`, so the minimal time for a budget `M` is found by
//! bracketing and bisection on the predicate `M_min(τ) ≤ M`.

use std::io::Write;

use serde::Serialize;

use crate::dual::{control_from_dual, dual_objective, solve_dual, terminal_state, ControlSignal, DualOptions, DualSolution};
use crate::error::{invalid, Error, Result};
use crate::grid::{MaskDocument, SpatialMask};
use crate::linalg::norm;
use crate::rnorm::RNorm;
use crate::spacetime::SampleSet;
use crate::spectral::SpectralBasis;

#[derive(Debug, Clone)]
pub struct TimeOptOptions {
    /// Lower bound on the Gauss–Legendre panel count; the count grows
    /// with `τ λ_max` so each panel sees at most one decay length.
    pub min_panels: usize,
    pub max_panels: usize,
    /// First horizon tried when bracketing.
    pub tau_start: f64,
    pub max_doublings: usize,
    pub dual: DualOptions,
}

impl Default for TimeOptOptions {
    fn default() -> Self {
        Self {
            min_panels: 16,
            max_panels: 2048,
            tau_start: 0.05,
            max_doublings: 32,
            dual: DualOptions::default(),
        }
    }
}

impl TimeOptOptions {
    pub fn panels(&self, basis: &SpectralBasis, tau: f64) -> usize {
        let lmax = basis.eigenvalues().last().copied().unwrap_or(0.0);
        ((tau * lmax).ceil() as usize).clamp(self.min_panels, self.max_panels)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MinNormControl {
    pub tau: f64,
    /// `M_min(τ) = N(b*)`.
    pub m_min: f64,
    pub control: ControlSignal,
    pub terminal: Vec<f64>,
    /// `‖u(τ)‖ / ‖u0‖`.
    pub residual: f64,
    pub solution: DualSolution,
}

fn check_omega(basis: &SpectralBasis, omega: &SpatialMask) -> Result<()> {
    if omega.domain().n_cells() != basis.domain().n_cells() {
        return Err(invalid("omega", "grid differs from the basis grid"));
    }
    if omega.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(())
}

fn decayed(basis: &SpectralBasis, u0: &[f64], tau: f64) -> Vec<f64> {
    u0.iter().zip(basis.eigenvalues()).map(|(a, l)| a * (-l * tau).exp()).collect()
}

/// Quadrature set the horizon-`τ` problem is posed on.
pub fn cylinder_set(basis: &SpectralBasis, omega: &SpatialMask, tau: f64, opts: &TimeOptOptions) -> Result<SampleSet> {
    SampleSet::adjoint_cylinder(basis, omega, tau, opts.panels(basis, tau))
}

/// `J_τ(b)` on the set of [`cylinder_set`].
pub fn time_functional(set: &SampleSet, basis: &SpectralBasis, u0: &[f64], b: &[f64], r: f64) -> f64 {
    dual_objective(set, &decayed(basis, u0, set.horizon()), b, r)
}

/// Smallest-bound null control at horizon `τ`.
pub fn min_norm_control(
    basis: &SpectralBasis,
    u0: &[f64],
    omega: &SpatialMask,
    tau: f64,
    r: f64,
    opts: &TimeOptOptions,
) -> Result<MinNormControl> {
    basis.check_len(u0)?;
    check_omega(basis, omega)?;
    RNorm::new(r)?;
    let set = cylinder_set(basis, omega, tau, opts)?;
    let solution = solve_dual(&set, &decayed(basis, u0, tau), r, &opts.dual)?;
    let control = control_from_dual(&set, MaskDocument::from_spatial(omega), &solution.b, r)?;
    let terminal = terminal_state(&set, u0, &control)?;
    let u0n = norm(u0);
    Ok(MinNormControl {
        tau,
        m_min: control.bound,
        residual: if u0n > 0.0 { norm(&terminal) / u0n } else { 0.0 },
        control,
        terminal,
        solution,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BangBang {
    /// Fraction of marked entries with `||v|_r − M| > εM`.
    pub fraction: f64,
    pub eps: f64,
    /// Entries where `φ*` vanished.
    pub excluded: usize,
    pub excluded_measure: f64,
}

pub fn bang_bang_residual(control: &ControlSignal, bound: f64, eps: f64) -> BangBang {
    BangBang {
        fraction: control.bang_bang_fraction(bound, eps),
        eps,
        excluded: control.excluded,
        excluded_measure: control.excluded_measure,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub tau: f64,
    pub m_min: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeOptimalResult {
    pub tau_star: f64,
    pub budget: f64,
    #[serde(with = "crate::rnorm::exponent")]
    pub r: f64,
    /// `M_min(lo) > M ≥ M_min(hi)`; `τ* = hi`.
    pub bracket: (f64, f64),
    /// Every evaluated `(τ, M_min(τ))`, sorted by `τ`.
    pub curve: Vec<CurvePoint>,
    pub m_min: f64,
    pub residual: f64,
    pub bang_bang: BangBang,
    pub iterations: usize,
    pub seed: u64,
    #[serde(skip)]
    pub control: ControlSignal,
    #[serde(skip)]
    pub terminal: Vec<f64>,
}

/// Checks `M_min` nonincreasing over the sampled curve.
pub fn check_monotone(curve: &[CurvePoint]) -> Result<()> {
    for w in curve.windows(2) {
        if w[1].m_min > w[0].m_min * (1.0 + 1e-9) {
            return Err(Error::Degenerate(format!(
                "M_min increases from {} at τ = {} to {} at τ = {}",
                w[0].m_min, w[0].tau, w[1].m_min, w[1].tau
            )));
        }
    }
    Ok(())
}

/// Smallest horizon at which the budget `M` suffices, to within `bracket_tol`.
pub fn minimal_time(
    basis: &SpectralBasis,
    u0: &[f64],
    budget: f64,
    omega: &SpatialMask,
    r: f64,
    bracket_tol: f64,
    opts: &TimeOptOptions,
) -> Result<TimeOptimalResult> {
    basis.check_len(u0)?;
    check_omega(basis, omega)?;
    RNorm::new(r)?;
    if !(budget > 0.0) {
        return Err(invalid("M", format!("budget must be positive, got {budget}")));
    }
    if !(bracket_tol > 0.0) {
        return Err(invalid("bracket_tol", format!("must be positive, got {bracket_tol}")));
    }
    if !(opts.tau_start > 0.0) {
        return Err(invalid("tau_start", format!("must be positive, got {}", opts.tau_start)));
    }
    if norm(u0) == 0.0 {
        let set = SampleSet::adjoint_cylinder(basis, omega, f64::MIN_POSITIVE, 1)?;
        let control = ControlSignal::zero(&set, MaskDocument::from_spatial(omega), r)?;
        return Ok(TimeOptimalResult {
            tau_star: 0.0,
            budget,
            r,
            bracket: (0.0, 0.0),
            curve: Vec::new(),
            m_min: 0.0,
            residual: 0.0,
            bang_bang: bang_bang_residual(&control, budget, 0.0),
            iterations: 0,
            seed: opts.dual.seed,
            control,
            terminal: u0.to_vec(),
        });
    }

    let mut curve = Vec::new();
    let eval = |tau: f64, curve: &mut Vec<CurvePoint>| -> Result<MinNormControl> {
        let s = min_norm_control(basis, u0, omega, tau, r, opts)?;
        log::debug!("M_min({tau:.6}) = {:.6e}", s.m_min);
        curve.push(CurvePoint { tau, m_min: s.m_min });
        Ok(s)
    };

    // bracket: lo infeasible (or 0), hi feasible
    let mut tau = opts.tau_start;
    let mut hi_sol = eval(tau, &mut curve)?;
    let mut lo = 0.0;
    if hi_sol.m_min > budget {
        let mut found = false;
        for _ in 0..opts.max_doublings {
            lo = tau;
            tau *= 2.0;
            hi_sol = eval(tau, &mut curve)?;
            if hi_sol.m_min <= budget {
                found = true;
                break;
            }
        }
        if !found {
            return Err(Error::NoBracket {
                tau_max: tau,
                m_min: hi_sol.m_min,
                budget,
            });
        }
    } else {
        for _ in 0..opts.max_doublings {
            let s = eval(0.5 * tau, &mut curve)?;
            if s.m_min > budget {
                lo = 0.5 * tau;
                break;
            }
            tau *= 0.5;
            hi_sol = s;
        }
    }
    let mut hi = tau;
    while hi - lo > bracket_tol {
        let mid = 0.5 * (lo + hi);
        let s = eval(mid, &mut curve)?;
        if s.m_min <= budget {
            hi = mid;
            hi_sol = s;
        } else {
            lo = mid;
        }
    }
    curve.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    check_monotone(&curve)?;
    Ok(TimeOptimalResult {
        tau_star: hi,
        budget,
        r,
        bracket: (lo, hi),
        m_min: hi_sol.m_min,
        residual: hi_sol.residual,
        bang_bang: bang_bang_residual(&hi_sol.control, hi_sol.m_min, 0.05),
        iterations: hi_sol.solution.iterations,
        seed: opts.dual.seed,
        curve,
        control: hi_sol.control,
        terminal: hi_sol.terminal,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Uniqueness {
    pub seeds: (u64, u64),
    pub tau_star: (f64, f64),
    /// `∫∫|v₁ − v₂|_1 / ∫∫|v₁|_1` on the first horizon.
    pub relative_distance: f64,
    /// The second control was recomputed on the first horizon.
    pub realigned: bool,
}

/// Solves the minimal-time problem from two seeds and compares the controls.
#[allow(clippy::too_many_arguments)]
pub fn uniqueness_check(
    basis: &SpectralBasis,
    u0: &[f64],
    budget: f64,
    omega: &SpatialMask,
    r: f64,
    bracket_tol: f64,
    seeds: (u64, u64),
    opts: &TimeOptOptions,
) -> Result<Uniqueness> {
    if !(r > 1.0 && r.is_finite()) {
        return Err(invalid("r", format!("uniqueness needs 1 < r < ∞, got {r}")));
    }
    let with_seed = |s: u64| TimeOptOptions {
        dual: DualOptions { seed: s, ..opts.dual.clone() },
        ..opts.clone()
    };
    let o1 = with_seed(seeds.0);
    let o2 = with_seed(seeds.1);
    let a = minimal_time(basis, u0, budget, omega, r, bracket_tol, &o1)?;
    let b = minimal_time(basis, u0, budget, omega, r, bracket_tol, &o2)?;
    if (a.tau_star - b.tau_star).abs() > 2.0 * bracket_tol {
        return Err(Error::Inconclusive(format!(
            "minimal times {} and {} differ by more than twice the bracket {bracket_tol}",
            a.tau_star, b.tau_star
        )));
    }
    let (second, realigned) = if a.tau_star == b.tau_star {
        (b.control, false)
    } else {
        (min_norm_control(basis, u0, omega, a.tau_star, r, &o2)?.control, true)
    };
    let mass = a.control.l1_mass();
    let dist = a.control.l1_distance(&second)?;
    Ok(Uniqueness {
        seeds,
        tau_star: (a.tau_star, b.tau_star),
        relative_distance: if mass > 0.0 { dist / mass } else { dist },
        realigned,
    })
}

impl TimeOptimalResult {
    pub fn write_curve_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tau", "m_min"])?;
        for p in &self.curve {
            w.write_record([format!("{:e}", p.tau), format!("{:e}", p.m_min)])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RectDomain;
    use crate::spectral::{solve_modes, Cutoff, Method};

    fn setup(k: usize) -> (SpectralBasis, SpatialMask) {
        let d = RectDomain::unit_square(12, 1.0, 10).unwrap();
        let b = solve_modes(&d, Cutoff::Count(k), Method::Dense).unwrap();
        let omega = SpatialMask::ball(d, (0.3, 0.4), 0.25).unwrap().0;
        (b, omega)
    }

    #[test]
    fn zero_state_needs_no_time() {
        let (b, omega) = setup(3);
        let r = minimal_time(&b, &[0.0; 3], 1.0, &omega, 2.0, 1e-3, &TimeOptOptions::default()).unwrap();
        assert_eq!(r.tau_star, 0.0);
        assert!(r.control.entries.is_empty());
        let m = min_norm_control(&b, &[0.0; 3], &omega, 0.1, 2.0, &TimeOptOptions::default()).unwrap();
        assert_eq!(m.m_min, 0.0);
    }

    #[test]
    fn m_min_is_homogeneous() {
        let (b, omega) = setup(3);
        let opts = TimeOptOptions::default();
        let u0 = [1.0, -0.5, 0.25];
        let one = min_norm_control(&b, &u0, &omega, 0.1, 2.0, &opts).unwrap();
        let two = min_norm_control(&b, &u0.map(|x| 2.0 * x), &omega, 0.1, 2.0, &opts).unwrap();
        assert!((two.m_min / one.m_min - 2.0).abs() <= 1e-6);
        assert!(one.residual <= 1e-6, "{}", one.residual);
    }

    #[test]
    fn rejects_bad_arguments() {
        let (b, omega) = setup(3);
        let opts = TimeOptOptions::default();
        let u0 = [1.0, 0.0, 0.0];
        let e = minimal_time(&b, &u0, -1.0, &omega, 2.0, 1e-3, &opts);
        assert!(matches!(e, Err(Error::InvalidArgument { name: "M", .. })), "{e:?}");
        let e = minimal_time(&b, &u0, 1.0, &omega, 0.5, 1e-3, &opts);
        assert!(matches!(e, Err(Error::InvalidArgument { name: "r", .. })), "{e:?}");
        let e = uniqueness_check(&b, &u0, 1.0, &omega, f64::INFINITY, 1e-3, (1, 2), &opts);
        assert!(matches!(e, Err(Error::InvalidArgument { name: "r", .. })));
        assert!(matches!(
            minimal_time(&b, &[1.0, 0.0], 1.0, &omega, 2.0, 1e-3, &opts),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn vacuous_bang_bang_threshold() {
        let (b, omega) = setup(3);
        let m = min_norm_control(&b, &[1.0, 0.3, -0.2], &omega, 0.1, 4.0, &TimeOptOptions::default()).unwrap();
        assert_eq!(bang_bang_residual(&m.control, m.m_min, 1.0).fraction, 0.0);
        assert!(bang_bang_residual(&m.control, m.m_min, 1e-9).fraction == 0.0);
    }

    #[test]
    fn minimal_time_monotone_in_budget() {
        let (b, omega) = setup(3);
        let opts = TimeOptOptions::default();
        let u0 = [1.0, -0.5, 0.25];
        let tol = 1e-4;
        let mut last = f64::INFINITY;
        for m in [1.0, 2.0, 4.0] {
            let res = minimal_time(&b, &u0, m, &omega, 2.0, tol, &opts).unwrap();
            assert!(res.tau_star < last);
            last = res.tau_star;
            assert!(res.bracket.1 - res.bracket.0 <= tol);
            assert!(res.m_min <= m && res.residual <= 1e-2);
            res.control.check_bound().unwrap();
            // predicate consistency either side of τ*
            let above = min_norm_control(&b, &u0, &omega, res.tau_star + tol, 2.0, &opts).unwrap();
            let below = min_norm_control(&b, &u0, &omega, res.tau_star - tol, 2.0, &opts).unwrap();
            assert!(above.m_min <= m && m <= below.m_min * (1.0 + 1e-3));
        }
    }

    #[test]
    fn m_min_sweep_nonincreasing() {
        let (b, omega) = setup(3);
        let opts = TimeOptOptions::default();
        let curve: Vec<CurvePoint> = [0.02, 0.05, 0.1, 0.2, 0.3]
            .iter()
            .map(|&tau| CurvePoint {
                tau,
                m_min: min_norm_control(&b, &[0.5, 1.0, -0.7], &omega, tau, 2.0, &opts).unwrap().m_min,
            })
            .collect();
        check_monotone(&curve).unwrap();
        assert!(curve[4].m_min < curve[0].m_min);
    }

    #[test]
    fn identical_seeds_are_bit_exact() {
        let (b, omega) = setup(3);
        let opts = TimeOptOptions::default();
        let u0 = [1.0, 0.2, -0.4];
        let a = minimal_time(&b, &u0, 2.0, &omega, 1.5, 1e-3, &opts).unwrap();
        let c = minimal_time(&b, &u0, 2.0, &omega, 1.5, 1e-3, &opts).unwrap();
        assert_eq!(a.tau_star.to_bits(), c.tau_star.to_bits());
        assert_eq!(a.control.l1_distance(&c.control).unwrap(), 0.0);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&c).unwrap());
    }

    #[test]
    fn time_functional_is_convex() {
        let (b, omega) = setup(4);
        let opts = TimeOptOptions::default();
        let u0 = [1.0, -0.5, 0.25, 0.1];
        let mut rng = crate::rng::stream(5, crate::rng::streams::PROBE);
        for r in [1.0, 2.0, 4.0, f64::INFINITY] {
            let set = cylinder_set(&b, &omega, 0.1, &opts).unwrap();
            for _ in 0..20 {
                let b1 = crate::rng::gaussian_vec(&mut rng, 4);
                let b2 = crate::rng::gaussian_vec(&mut rng, 4);
                let (j1, j2) = (time_functional(&set, &b, &u0, &b1, r), time_functional(&set, &b, &u0, &b2, r));
                for s in [0.1, 0.25, 0.5, 0.75, 0.9] {
                    let m: Vec<f64> = b1.iter().zip(&b2).map(|(x, y)| (1.0 - s) * x + s * y).collect();
                    let jm = time_functional(&set, &b, &u0, &m, r);
                    assert!(jm <= (1.0 - s) * j1 + s * j2 + 1e-10, "r = {r}: {jm} vs {j1} {j2}");
                }
            }
        }
    }

    #[test]
    fn curve_csv_round_trip() {
        let (b, omega) = setup(3);
        let res = minimal_time(&b, &[1.0, 0.5, 0.0], 1.0, &omega, 2.0, 1e-3, &TimeOptOptions::default()).unwrap();
        let mut buf = Vec::new();
        res.write_curve_csv(&mut buf).unwrap();
        let mut rd = csv::Reader::from_reader(buf.as_slice());
        let taus: Vec<f64> = rd.records().map(|r| r.unwrap()[0].parse().unwrap()).collect();
        assert_eq!(taus.len(), res.curve.len());
        assert!(taus.windows(2).all(|w| w[0] <= w[1]));
    }
}

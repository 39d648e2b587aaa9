//! Stokes Dirichlet eigenmodes of a rectangle through the clamped stream
//! function pencil, modal synthesis and semigroup evolution.

mod field;
mod growth;
mod operators;
mod solver;

use serde::{Deserialize, Serialize};

pub use field::StaggeredField;
pub use growth::{derivative_growth_check, GrowthRow, GrowthTable};
pub use operators::{assemble_operators, node_index, Operators};
pub use solver::{inertia_below, DENSE_LIMIT};

use crate::error::{invalid, Error, Result};
use crate::grid::RectDomain;
use solver::{BlockKrylov, KrylovOptions, Pairs};

/// Relative gap below which neighbouring eigenvalues count as one cluster.
pub const CLUSTER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dense,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cutoff {
    /// The `J` smallest eigenvalues, extended over a cluster at the end.
    Count(usize),
    /// Every eigenvalue `≤ Λ`.
    Lambda(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Relative residual target of the iterative path.
    pub tol: f64,
    pub block: usize,
    pub max_dim: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            block: 4,
            max_dim: 800,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverInfo {
    pub method: Method,
    pub tol: f64,
    pub max_residual: f64,
    /// Shift at which completeness was certified.
    pub inertia_shift: f64,
    /// Eigenvalues below the shift according to the LDLᵀ inertia.
    pub inertia_count: usize,
    pub krylov_dim: usize,
}

#[derive(Debug, Clone)]
pub struct VelocityMode {
    pub index: usize,
    pub lambda: f64,
    /// Stream function on interior nodes.
    pub psi: Vec<f64>,
    pub field: StaggeredField,
    edges: Vec<[f64; 4]>,
    vectors: Vec<[f64; 2]>,
}

impl VelocityMode {
    fn new(domain: &RectDomain, index: usize, lambda: f64, mut psi: Vec<f64>) -> Result<Self> {
        let norm = StaggeredField::from_psi(domain, &psi)?.l2_norm();
        if !(norm > 0.0) {
            return Err(Error::Degenerate(format!("mode {index} has zero velocity")));
        }
        psi.iter_mut().for_each(|x| *x /= norm);
        Self::stored(domain, index, lambda, psi)
    }

    // Takes psi as archived; renormalizing would perturb the last bits.
    fn stored(domain: &RectDomain, index: usize, lambda: f64, psi: Vec<f64>) -> Result<Self> {
        let field = StaggeredField::from_psi(domain, &psi)?;
        if !(field.l2_norm() > 0.0) {
            return Err(Error::Degenerate(format!("mode {index} has zero velocity")));
        }
        let edges = (0..domain.n_cells()).map(|c| field.cell_edges(c)).collect();
        let vectors = (0..domain.n_cells()).map(|c| field.cell_vector(c)).collect();
        Ok(Self {
            index,
            lambda,
            psi,
            field,
            edges,
            vectors,
        })
    }

    /// `[u_left, u_right, v_bottom, v_top]` per cell.
    pub fn cell_edges(&self) -> &[[f64; 4]] {
        &self.edges
    }

    /// Edge-averaged velocity per cell.
    pub fn cell_vectors(&self) -> &[[f64; 2]] {
        &self.vectors
    }
}

#[derive(Debug, Clone)]
pub struct SpectralBasis {
    domain: RectDomain,
    modes: Vec<VelocityMode>,
    cutoff: Cutoff,
    info: SolverInfo,
}

/// Number of leading eigenvalues to keep, and the certification shift.
/// `None` when more eigenvalues are needed to decide.
fn select(values: &[f64], total: usize, cutoff: Cutoff) -> Result<Option<(usize, f64)>> {
    let complete = values.len() == total;
    match cutoff {
        Cutoff::Count(j) => {
            if j == 0 || j > total {
                return Err(invalid("cutoff", format!("mode count {j} outside 1..={total}")));
            }
            let mut k = j;
            while k < values.len() && values[k] - values[k - 1] < CLUSTER_TOL * values[k - 1] {
                k += 1;
            }
            if k < values.len() {
                Ok(Some((k, 0.5 * (values[k - 1] + values[k]))))
            } else if complete {
                Ok(Some((k, 2.0 * values[k - 1] + 1.0)))
            } else {
                Ok(None)
            }
        }
        Cutoff::Lambda(lam) => {
            if !(lam > 0.0 && lam.is_finite()) {
                return Err(invalid("cutoff", format!("eigenvalue cutoff must be positive, got {lam}")));
            }
            if let Some(gap) = values
                .iter()
                .map(|v| (v - lam).abs())
                .filter(|g| *g < CLUSTER_TOL * lam)
                .reduce(f64::min)
            {
                return Err(Error::ClusterSplit { cutoff: lam, gap });
            }
            let k = values.iter().take_while(|&&v| v <= lam).count();
            if k < values.len() || complete {
                if k == 0 {
                    return Err(invalid("cutoff", format!("no eigenvalue below {lam}")));
                }
                Ok(Some((k, lam)))
            } else {
                Ok(None)
            }
        }
    }
}

fn dense_path(ops: &Operators, cutoff: Cutoff) -> Result<(Pairs, usize, f64, usize)> {
    let pairs = solver::dense(ops)?;
    let (k, shift) = select(&pairs.values, ops.n(), cutoff)?.expect("complete spectrum decides");
    let inertia = inertia_below(ops, shift)?;
    if inertia != k {
        return Err(Error::Incomplete {
            shift,
            inertia,
            found: k,
        });
    }
    Ok((pairs, k, shift, inertia))
}

fn iterative_path(
    ops: &Operators,
    cutoff: Cutoff,
    opts: &SolverOptions,
) -> Result<(Pairs, usize, f64, usize)> {
    let n = ops.n();
    let block = opts.block.max(1);
    let mut kry = BlockKrylov::new(
        ops,
        KrylovOptions {
            tol: opts.tol,
            block,
            max_dim: opts.max_dim,
            seed: opts.seed,
        },
    )?;
    let mut want = match cutoff {
        Cutoff::Count(j) => (j + 1).min(n),
        Cutoff::Lambda(lam) => (inertia_below(ops, lam)? + 1).min(n),
    };
    let mut last_residual;
    let mut last_converged;
    loop {
        while kry.dim() < (want + 2 * block).min(n) {
            if !kry.extend() {
                break;
            }
        }
        let pairs = kry.ritz(want);
        let converged = pairs.residuals.iter().take_while(|&&r| r <= kry.tol()).count();
        last_residual = pairs.max_residual();
        last_converged = converged;
        if converged == pairs.values.len() && converged >= want.min(kry.dim()) {
            let total = if kry.dim() == n { n } else { usize::MAX };
            match select(&pairs.values, total, cutoff)? {
                None => {
                    want = (want + block).min(n);
                    continue;
                }
                Some((k, shift)) => {
                    let inertia = inertia_below(ops, shift)?;
                    if inertia == k {
                        return Ok((pairs, k, shift, inertia));
                    }
                    if inertia < k {
                        return Err(Error::Incomplete {
                            shift,
                            inertia,
                            found: k,
                        });
                    }
                    // an eigenvalue below the shift is still missing
                    log::debug!("inertia {inertia} above {k} found pairs, extending");
                    want = (inertia + 1).min(n);
                }
            }
        }
        if kry.dim() >= kry.max_dim() || !kry.extend() {
            return Err(Error::NoConvergence {
                wanted: want,
                converged: last_converged,
                residual: last_residual,
            });
        }
    }
}

/// Solve `Aψ = λBψ` and build the normalized velocity modes.
pub fn solve_modes(domain: &RectDomain, cutoff: Cutoff, method: Method) -> Result<SpectralBasis> {
    solve_modes_with(domain, cutoff, method, &SolverOptions::default())
}

pub fn solve_modes_with(
    domain: &RectDomain,
    cutoff: Cutoff,
    method: Method,
    opts: &SolverOptions,
) -> Result<SpectralBasis> {
    let ops = assemble_operators(domain);
    let (pairs, k, shift, inertia) = match method {
        Method::Dense => dense_path(&ops, cutoff)?,
        Method::Iterative => iterative_path(&ops, cutoff, opts)?,
    };
    let mut modes = Vec::with_capacity(k);
    let mut max_residual: f64 = 0.0;
    for (idx, (lam, mut psi)) in pairs.values.into_iter().zip(pairs.vectors).take(k).enumerate() {
        if !(lam > 0.0) {
            return Err(Error::Singular(format!("non-positive eigenvalue {lam}")));
        }
        // deterministic sign: largest component positive
        let imax = psi
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if psi[imax] < 0.0 {
            psi.iter_mut().for_each(|x| *x = -*x);
        }
        max_residual = max_residual.max(pairs.residuals[idx]);
        modes.push(VelocityMode::new(domain, idx + 1, lam, psi)?);
    }
    Ok(SpectralBasis {
        domain: *domain,
        modes,
        cutoff,
        info: SolverInfo {
            method,
            tol: opts.tol,
            max_residual,
            inertia_shift: shift,
            inertia_count: inertia,
            krylov_dim: pairs.krylov_dim,
        },
    })
}

impl SpectralBasis {
    pub fn domain(&self) -> &RectDomain {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[VelocityMode] {
        &self.modes
    }

    /// Mode `j`, zero-based.
    pub fn mode(&self, j: usize) -> &VelocityMode {
        &self.modes[j]
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.lambda).collect()
    }

    pub fn cutoff(&self) -> Cutoff {
        self.cutoff
    }

    pub fn info(&self) -> &SolverInfo {
        &self.info
    }

    /// Same domain with a different time grid; eigenpairs are unchanged.
    pub fn with_time(&self, t_horizon: f64, nt: usize) -> Result<Self> {
        let domain = self.domain.with_time(t_horizon, nt)?;
        let mut out = self.clone();
        out.domain = domain;
        for m in &mut out.modes {
            m.field = StaggeredField::from_psi(&domain, &m.psi)?;
        }
        Ok(out)
    }

    /// Number of modes with `λ_j ≤ Λ`.
    pub fn count_below(&self, lambda: f64) -> usize {
        self.modes.iter().take_while(|m| m.lambda <= lambda).count()
    }

    /// The first `k` modes.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.len() {
            return Err(invalid("k", format!("must lie in 1..={}", self.len())));
        }
        let mut out = self.clone();
        out.modes.truncate(k);
        out.cutoff = Cutoff::Count(k);
        Ok(out)
    }

    /// Modes with `λ_j ≤ Λ`, erroring when `Λ` lies beyond the basis.
    pub fn below(&self, lambda: f64) -> Result<Self> {
        let k = self.count_below(lambda);
        if k == self.len() && lambda > self.info.inertia_shift {
            return Err(invalid(
                "lambda",
                format!(
                    "{lambda} exceeds the certified range of the basis ({})",
                    self.info.inertia_shift
                ),
            ));
        }
        self.truncated(k)
    }

    /// Largest |⟨e_i, e_j⟩ − δ_ij| over the whole domain.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, mi) in self.modes.iter().enumerate() {
            for mj in &self.modes[..=i] {
                let g = mi.field.inner(&mj.field);
                let target = if mi.index == mj.index { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }

    pub fn max_divergence(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| m.field.max_abs_divergence())
            .fold(0.0, f64::max)
    }

    pub fn check_len(&self, a: &[f64]) -> Result<()> {
        if a.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: a.len(),
            });
        }
        Ok(())
    }

    /// Cell-averaged vectors of `Σ a_j e_j`.
    pub fn synthesize_cells(&self, a: &[f64]) -> Result<Vec<[f64; 2]>> {
        self.check_len(a)?;
        let mut out = vec![[0.0; 2]; self.domain.n_cells()];
        for (m, &aj) in self.modes.iter().zip(a) {
            if aj == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(&m.vectors) {
                o[0] += aj * w[0];
                o[1] += aj * w[1];
            }
        }
        Ok(out)
    }

    pub fn to_archive(&self) -> BasisArchive {
        BasisArchive {
            format: ARCHIVE_FORMAT.to_string(),
            domain: self.domain,
            cutoff: self.cutoff,
            info: self.info.clone(),
            eigenvalues: self.eigenvalues(),
            psi: self.modes.iter().map(|m| m.psi.clone()).collect(),
        }
    }

    pub fn from_archive(archive: BasisArchive) -> Result<Self> {
        if archive.format != ARCHIVE_FORMAT {
            return Err(Error::Format(format!("unknown basis format {}", archive.format)));
        }
        if archive.eigenvalues.len() != archive.psi.len() {
            return Err(Error::Format("eigenvalue and stream counts differ".into()));
        }
        let modes = archive
            .eigenvalues
            .iter()
            .zip(archive.psi)
            .enumerate()
            .map(|(k, (&lam, psi))| VelocityMode::stored(&archive.domain, k + 1, lam, psi))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            domain: archive.domain,
            modes,
            cutoff: archive.cutoff,
            info: archive.info,
        })
    }
}

/// `Σ a_j e_j` on the staggered grid.
pub fn synthesize_field(basis: &SpectralBasis, a: &[f64]) -> Result<StaggeredField> {
    basis.check_len(a)?;
    let mut f = StaggeredField::zeros(basis.domain);
    for (m, &aj) in basis.modes.iter().zip(a) {
        if aj != 0.0 {
            f.axpy(aj, &m.field);
        }
    }
    Ok(f)
}

const ARCHIVE_FORMAT: &str = "stokes-basis/1";

/// Serialized basis: grid, eigenvalues in shortest round-trip decimal form,
/// stream functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisArchive {
    pub format: String,
    pub domain: RectDomain,
    pub cutoff: Cutoff,
    pub info: SolverInfo,
    pub eigenvalues: Vec<f64>,
    pub psi: Vec<Vec<f64>>,
}

impl BasisArchive {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Modal coefficients of a state at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalState {
    pub coeffs: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub t: f64,
}

impl ModalState {
    pub fn new(basis: &SpectralBasis, coeffs: Vec<f64>) -> Result<Self> {
        basis.check_len(&coeffs)?;
        Ok(Self {
            coeffs,
            lambdas: basis.eigenvalues(),
            t: 0.0,
        })
    }

    /// `‖z‖_H`, by Parseval.
    pub fn h_norm(&self) -> f64 {
        crate::linalg::norm(&self.coeffs)
    }

    /// `a_j ↦ a_j e^{−λ_j Δt}`.
    pub fn evolve(&self, dt: f64) -> Result<Self> {
        if !(dt >= 0.0) {
            return Err(invalid("dt", format!("must be non-negative, got {dt}")));
        }
        Ok(Self {
            coeffs: self
                .coeffs
                .iter()
                .zip(&self.lambdas)
                .map(|(a, l)| a * (-l * dt).exp())
                .collect(),
            lambdas: self.lambdas.clone(),
            t: self.t + dt,
        })
    }

    /// Split into modes with `λ_j ≤ Λ` and the rest, zero-padded.
    pub fn split(&self, lambda: f64) -> (Self, Self) {
        let mut low = self.clone();
        let mut high = self.clone();
        for (k, &l) in self.lambdas.iter().enumerate() {
            if l <= lambda {
                high.coeffs[k] = 0.0;
            } else {
                low.coeffs[k] = 0.0;
            }
        }
        (low, high)
    }
}

pub fn evolve(state: &ModalState, dt: f64) -> Result<ModalState> {
    state.evolve(dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: usize) -> RectDomain {
        RectDomain::unit_square(n, 1.0, 2).unwrap()
    }

    #[test]
    fn dense_and_iterative_agree() {
        let d = square(16);
        let dense = solve_modes(&d, Cutoff::Count(10), Method::Dense).unwrap();
        let iter = solve_modes(&d, Cutoff::Count(10), Method::Iterative).unwrap();
        assert_eq!(dense.len(), iter.len());
        for (a, b) in dense.eigenvalues().iter().zip(iter.eigenvalues()) {
            assert!((a - b).abs() <= 1e-8 * a, "{a} vs {b}");
        }
        assert!(dense.orthonormality_defect() < 1e-8);
        assert!(iter.orthonormality_defect() < 1e-6);
    }

    #[test]
    fn square_first_eigenvalues() {
        let b = solve_modes(&square(16), Cutoff::Count(3), Method::Dense).unwrap();
        let l = b.eigenvalues();
        assert!((l[0] - 51.6178).abs() < 1e-3, "{l:?}");
        // symmetric pair
        assert!((l[1] - l[2]).abs() < 1e-9 * l[1]);
    }

    #[test]
    fn cluster_kept_whole() {
        let b = solve_modes(&square(16), Cutoff::Count(2), Method::Dense).unwrap();
        assert_eq!(b.len(), 3);
    }

    #[test]
    fn lambda_cutoff_matches_count() {
        let d = square(16);
        let b = solve_modes(&d, Cutoff::Lambda(200.0), Method::Iterative).unwrap();
        let all = solve_modes(&d, Cutoff::Count(12), Method::Dense).unwrap();
        let k = all.count_below(200.0);
        assert_eq!(b.len(), k);
        assert_eq!(b.info().inertia_count, k);
    }

    #[test]
    fn cutoff_on_an_eigenvalue_is_rejected() {
        let d = square(16);
        let b = solve_modes(&d, Cutoff::Count(1), Method::Dense).unwrap();
        let err = solve_modes(&d, Cutoff::Lambda(b.eigenvalues()[0]), Method::Dense).unwrap_err();
        assert!(matches!(err, Error::ClusterSplit { .. }));
    }

    #[test]
    fn velocities_divergence_free_and_normalized() {
        let b = solve_modes(&square(16), Cutoff::Count(10), Method::Dense).unwrap();
        for m in b.modes() {
            assert!((m.field.l2_norm() - 1.0).abs() < 1e-10);
        }
        assert!(b.max_divergence() <= 1e-14, "{}", b.max_divergence());
    }

    #[test]
    fn rectangle_spectrum_below_square() {
        let sq = solve_modes(&RectDomain::new(1.0, 1.0, 15, 15, 1.0, 2).unwrap(), Cutoff::Count(5), Method::Dense)
            .unwrap();
        let rect = solve_modes(&RectDomain::new(2.0, 1.0, 31, 15, 1.0, 2).unwrap(), Cutoff::Count(5), Method::Iterative)
            .unwrap();
        for (r, s) in rect.eigenvalues().iter().zip(sq.eigenvalues()).take(5) {
            assert!(*r <= s, "{r} > {s}");
        }
    }

    #[test]
    fn archive_round_trip() {
        let b = solve_modes(&square(16), Cutoff::Count(4), Method::Dense).unwrap();
        let json = b.to_archive().to_json().unwrap();
        let back = SpectralBasis::from_archive(BasisArchive::from_json(&json).unwrap()).unwrap();
        assert_eq!(back.eigenvalues(), b.eigenvalues());
        for (x, y) in back.modes().iter().zip(b.modes()) {
            assert!((x.field.l2_norm() - y.field.l2_norm()).abs() < 1e-12);
            assert!(x.field.max_abs_diff(&y.field) < 1e-12);
        }
    }

    #[test]
    fn synthesis_reproduces_modes_and_parseval() {
        let b = solve_modes(&square(16), Cutoff::Count(6), Method::Dense).unwrap();
        let mut a = vec![0.0; 6];
        a[0] = 1.0;
        let f = synthesize_field(&b, &a).unwrap();
        assert!(f.max_abs_diff(&b.mode(0).field) == 0.0);
        let a = [0.3, -1.2, 0.5, 2.0, -0.1, 0.7];
        let f = synthesize_field(&b, &a).unwrap();
        let parseval: f64 = a.iter().map(|x| x * x).sum();
        assert!((f.l2_norm().powi(2) - parseval).abs() < 1e-8);
        assert!(synthesize_field(&b, &a[..3]).is_err());
    }

    #[test]
    fn evolve_basics() {
        let b = solve_modes(&square(16), Cutoff::Count(4), Method::Dense).unwrap();
        let s = ModalState::new(&b, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(s.evolve(0.0).unwrap().coeffs, s.coeffs);
        let t = 0.01;
        let z = s.evolve(t).unwrap();
        assert!((z.h_norm() - (-b.eigenvalues()[1] * t).exp()).abs() < 1e-15);
        assert!(s.evolve(-1.0).is_err());
    }
}

//! Batch experiments: a strict TOML config names a pipeline, the runner
//! executes it, writes `summary.json` plus CSV tables, and records the
//! SHA-256 of every payload in `manifest.json`.
//!
//! Bases are cached as JSON archives keyed by the hash of
//! `(domain, cutoff, method)`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::dual::{ControlSignal, DualOptions};
use crate::error::{Error, Result};
use crate::grid::{RectDomain, SpaceTimeMask, SpatialMask};
use crate::observability::{certify_observability, dual_null_control, observability_ratio, TelescopeOptions};
use crate::rnorm::p_norm;
use crate::shape::{
    evaluate_crand, randomized_constant_mc, solve_relaxed_design, truncation_certificate, write_mode_table, Law,
};
use crate::smallness::{growth_fit, l1_constant_estimate, l2_constant, write_constant_table, ConstantRow, SubgradientOptions};
use crate::spectral::{solve_modes_with, BasisArchive, Cutoff, Method, SolverOptions, SpectralBasis};
use crate::timeopt::{minimal_time, uniqueness_check, TimeOptOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Eigen,
    Spectral,
    Observe,
    Shape,
    Timeopt,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Eigen => "eigen",
            Kind::Spectral => "spectral",
            Kind::Observe => "observe",
            Kind::Shape => "shape",
            Kind::Timeopt => "timeopt",
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(default = "one")]
    pub lx: f64,
    #[serde(default = "one")]
    pub ly: f64,
    /// Cells per side along x.
    pub cells_x: usize,
    /// Defaults to `cells_x`.
    pub cells_y: Option<usize>,
    #[serde(default = "one")]
    pub t_horizon: f64,
    #[serde(default = "default_nt")]
    pub nt: usize,
}

fn default_nt() -> usize {
    40
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub modes: Option<usize>,
    pub lambda: Option<f64>,
    #[serde(default = "default_method")]
    pub method: Method,
}

fn default_method() -> Method {
    Method::Dense
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum MaskConfig {
    #[default]
    Full,
    Ball { center: [f64; 2], radius: f64 },
    Rect { x: [f64; 2], y: [f64; 2] },
    Random { fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralConfig {
    /// Cutoffs `Λ` at which the constants are measured.
    pub lambdas: Vec<f64>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
}

fn default_restarts() -> usize {
    8
}

fn default_iterations() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserveConfig {
    /// Marked time window; the whole horizon by default.
    pub window: Option<[f64; 2]>,
    #[serde(default = "default_depth")]
    pub m_max: usize,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// Initial state of a dual null control run.
    pub u0: Option<Vec<f64>>,
}

fn default_depth() -> usize {
    12
}

fn default_probes() -> usize {
    24
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeConfig {
    pub horizon: f64,
    /// Volume fraction `L`.
    pub fraction: f64,
    /// Modes `J` kept in the max-min problem.
    pub modes: usize,
    #[serde(default = "default_samples")]
    pub mc_samples: usize,
    #[serde(default = "default_law")]
    pub law: Law,
    /// Coefficients of the randomized state; `1/(1+j)` by default.
    pub coeffs: Option<Vec<f64>>,
}

fn default_samples() -> usize {
    10_000
}

fn default_law() -> Law {
    Law::Gaussian
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeoptConfig {
    pub u0: Vec<f64>,
    /// Pointwise bound `M`.
    pub budget: f64,
    #[serde(with = "crate::rnorm::exponent")]
    pub r: f64,
    #[serde(default = "default_bracket")]
    pub bracket_tol: f64,
    #[serde(default = "default_tau_start")]
    pub tau_start: f64,
    /// Second seed for a uniqueness check (`1 < r < ∞` only).
    pub compare_seed: Option<u64>,
}

fn default_bracket() -> f64 {
    1e-4
}

fn default_tau_start() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<Kind>,
    pub seed: Option<u64>,
    /// Output directory; the `--out` flag takes precedence.
    pub out: Option<PathBuf>,
    /// Basis cache; `<out>/cache` by default.
    pub cache_dir: Option<PathBuf>,
    pub domain: DomainConfig,
    pub basis: BasisConfig,
    #[serde(default)]
    pub mask: MaskConfig,
    pub spectral: Option<SpectralConfig>,
    pub observe: Option<ObserveConfig>,
    pub shape: Option<ShapeConfig>,
    pub timeopt: Option<TimeoptConfig>,
}

fn bad(field: &str, reason: impl std::fmt::Display) -> Error {
    Error::Config(format!("`{field}`: {reason}"))
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(field, format!("must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// Applies command-line overrides and checks the result.
    pub fn resolve(mut self, kind: Kind, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        if let Some(k) = self.kind {
            if k != kind {
                return Err(bad("kind", format!("config is `{}` but `{}` was requested", k.name(), kind.name())));
            }
        }
        self.kind = Some(kind);
        if seed.is_some() {
            self.seed = seed;
        }
        if out.is_some() {
            self.out = out;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn kind(&self) -> Result<Kind> {
        self.kind.ok_or_else(|| bad("kind", "missing"))
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.kind()?;
        let d = &self.domain;
        positive("domain.lx", d.lx)?;
        positive("domain.ly", d.ly)?;
        positive("domain.t_horizon", d.t_horizon)?;
        if d.cells_x < 5 || d.cells_y.is_some_and(|c| c < 5) {
            return Err(bad("domain.cells_x", "need at least 5 cells per side"));
        }
        if d.nt < 2 {
            return Err(bad("domain.nt", format!("need at least 2 steps, got {}", d.nt)));
        }
        match (self.basis.modes, self.basis.lambda) {
            (Some(0), _) => return Err(bad("basis.modes", "must be positive")),
            (Some(_), None) => {}
            (None, Some(l)) => positive("basis.lambda", l)?,
            _ => return Err(bad("basis", "give exactly one of `modes` and `lambda`")),
        }
        match &self.mask {
            MaskConfig::Ball { radius, .. } => positive("mask.radius", *radius)?,
            MaskConfig::Rect { x, y } => {
                if !(x[0] < x[1] && y[0] < y[1]) {
                    return Err(bad("mask.x", "intervals must be increasing"));
                }
            }
            MaskConfig::Random { fraction } => {
                if !(*fraction > 0.0 && *fraction < 1.0) {
                    return Err(bad("mask.fraction", format!("must lie in (0, 1), got {fraction}")));
                }
            }
            MaskConfig::Full => {}
        }
        let stochastic = kind != Kind::Eigen
            || self.basis.method == Method::Iterative
            || matches!(self.mask, MaskConfig::Random { .. });
        if stochastic && self.seed.is_none() {
            return Err(bad("seed", format!("required for `{}` runs", kind.name())));
        }
        match kind {
            Kind::Eigen => {}
            Kind::Spectral => {
                let s = self.spectral.as_ref().ok_or_else(|| bad("spectral", "section missing"))?;
                if s.lambdas.is_empty() {
                    return Err(bad("spectral.lambdas", "need at least one cutoff"));
                }
                for &l in &s.lambdas {
                    positive("spectral.lambdas", l)?;
                }
                if s.restarts < 8 {
                    return Err(bad("spectral.restarts", format!("need at least 8, got {}", s.restarts)));
                }
            }
            Kind::Observe => {
                let o = self.observe.as_ref().ok_or_else(|| bad("observe", "section missing"))?;
                if let Some([a, b]) = o.window {
                    if !(0.0 <= a && a < b && b <= d.t_horizon) {
                        return Err(bad("observe.window", format!("need 0 ≤ t0 < t1 ≤ {}", d.t_horizon)));
                    }
                }
                if o.m_max == 0 {
                    return Err(bad("observe.m_max", "must be positive"));
                }
                if o.restarts < 8 {
                    return Err(bad("observe.restarts", format!("need at least 8, got {}", o.restarts)));
                }
            }
            Kind::Shape => {
                let s = self.shape.as_ref().ok_or_else(|| bad("shape", "section missing"))?;
                positive("shape.horizon", s.horizon)?;
                if !(s.fraction > 0.0 && s.fraction < 1.0) {
                    return Err(bad("shape.fraction", format!("volume fraction L must lie in (0, 1), got {}", s.fraction)));
                }
                if s.modes == 0 {
                    return Err(bad("shape.modes", "must be positive"));
                }
                if s.mc_samples < 100 {
                    return Err(bad("shape.mc_samples", format!("need at least 100, got {}", s.mc_samples)));
                }
            }
            Kind::Timeopt => {
                let t = self.timeopt.as_ref().ok_or_else(|| bad("timeopt", "section missing"))?;
                positive("timeopt.budget", t.budget)?;
                positive("timeopt.bracket_tol", t.bracket_tol)?;
                positive("timeopt.tau_start", t.tau_start)?;
                if !(t.r >= 1.0) {
                    return Err(bad("timeopt.r", format!("must lie in [1, inf], got {}", t.r)));
                }
                if t.compare_seed.is_some() && !(t.r > 1.0 && t.r.is_finite()) {
                    return Err(bad("timeopt.compare_seed", "uniqueness needs 1 < r < inf"));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the config with output locations removed.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        c.cache_dir = None;
        sha_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }

    pub fn rect_domain(&self) -> Result<RectDomain> {
        let d = &self.domain;
        let cy = d.cells_y.unwrap_or(d.cells_x);
        RectDomain::new(d.lx, d.ly, d.cells_x - 1, cy - 1, d.t_horizon, d.nt)
    }

    pub fn cutoff(&self) -> Cutoff {
        match (self.basis.modes, self.basis.lambda) {
            (Some(k), _) => Cutoff::Count(k),
            (None, Some(l)) => Cutoff::Lambda(l),
            (None, None) => Cutoff::Count(1),
        }
    }

    pub fn spatial_mask(&self, domain: RectDomain) -> Result<SpatialMask> {
        match &self.mask {
            MaskConfig::Full => Ok(SpatialMask::full(domain)),
            MaskConfig::Ball { center, radius } => Ok(SpatialMask::ball(domain, (center[0], center[1]), *radius)?.0),
            MaskConfig::Rect { x, y } => {
                let m = SpatialMask::from_fn(domain, |px, py| px > x[0] && px < x[1] && py > y[0] && py < y[1]);
                if m.is_empty() {
                    Err(Error::EmptyMask)
                } else {
                    Ok(m)
                }
            }
            MaskConfig::Random { fraction } => SpatialMask::random(domain, *fraction, self.seed.unwrap_or(0)),
        }
    }
}

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheStatus {
    Hit,
    Miss,
    /// The cached archive failed its checks and was rebuilt.
    Rebuilt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub kind: Kind,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub basis_key: String,
    pub basis_cache: CacheStatus,
    /// Payload files relative to the output directory.
    pub files: Vec<FileRecord>,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    /// `(name, sha256)` of each payload; timing and cache status excluded.
    pub fn payload_hashes(&self) -> Vec<(String, String)> {
        self.files.iter().map(|f| (f.name.clone(), f.sha256.clone())).collect()
    }
}

pub const MANIFEST: &str = "manifest.json";
const ORTHO_TOL: f64 = 1e-8;
const DIV_TOL: f64 = 1e-12;

fn basis_key(domain: &RectDomain, cutoff: Cutoff, method: Method) -> String {
    let v = json!({ "domain": domain, "cutoff": cutoff, "method": method, "format": "stokes-basis/1" });
    sha_hex(v.to_string().as_bytes())[..16].to_string()
}

fn basis_checks(basis: &SpectralBasis) -> std::result::Result<(), String> {
    let o = basis.orthonormality_defect();
    if !(o <= ORTHO_TOL) {
        return Err(format!("orthonormality defect {o:e}"));
    }
    let d = basis.max_divergence();
    if !(d <= DIV_TOL) {
        return Err(format!("divergence {d:e}"));
    }
    let l = basis.eigenvalues();
    if l.windows(2).any(|w| w[0] > w[1]) {
        return Err("eigenvalues not sorted".into());
    }
    Ok(())
}

/// Loads the cached basis or solves and stores it.
pub fn cached_basis(
    cache: &Path,
    domain: &RectDomain,
    cutoff: Cutoff,
    method: Method,
    seed: u64,
) -> Result<(SpectralBasis, String, CacheStatus)> {
    let key = basis_key(domain, cutoff, method);
    let path = cache.join(format!("basis-{key}.json"));
    let mut status = CacheStatus::Miss;
    if path.exists() {
        let loaded = fs::read_to_string(&path)
            .map_err(Error::from)
            .and_then(|s| BasisArchive::from_json(&s))
            .and_then(SpectralBasis::from_archive);
        match loaded {
            Ok(b) if b.domain() == domain && b.cutoff() == cutoff => match basis_checks(&b) {
                Ok(()) => return Ok((b, key, CacheStatus::Hit)),
                Err(why) => log::warn!("cached basis {} rejected: {why}; recomputing", path.display()),
            },
            Ok(_) => log::warn!("cached basis {} describes another problem; recomputing", path.display()),
            Err(e) => log::warn!("cached basis {} unreadable ({e}); recomputing", path.display()),
        }
        status = CacheStatus::Rebuilt;
    }
    let opts = SolverOptions { seed, ..SolverOptions::default() };
    let basis = solve_modes_with(domain, cutoff, method, &opts)?;
    fs::create_dir_all(cache)?;
    fs::write(&path, basis.to_archive().to_json()?)?;
    Ok((basis, key, status))
}

struct Outputs {
    dir: PathBuf,
    files: Vec<FileRecord>,
}

impl Outputs {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.push(FileRecord {
            name: name.to_string(),
            sha256: sha_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn json(&mut self, name: &str, v: &impl Serialize) -> Result<()> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }
}

/// Executes the configured pipeline and writes its outputs.
pub fn run(config: &ExperimentConfig) -> Result<RunManifest> {
    config.validate()?;
    let start = Instant::now();
    let kind = config.kind()?;
    let dir = config.out.clone().ok_or_else(|| bad("out", "no output directory given"))?;
    fs::create_dir_all(&dir)?;
    let cache = config.cache_dir.clone().unwrap_or_else(|| dir.join("cache"));
    let seed = config.seed.unwrap_or(0);
    let domain = config.rect_domain()?;
    let (basis, basis_key, basis_cache) = cached_basis(&cache, &domain, config.cutoff(), config.basis.method, seed)?;
    let mut out = Outputs { dir: dir.clone(), files: Vec::new() };
    out.write("basis.json", basis.to_archive().to_json()?.as_bytes())?;

    let summary = match kind {
        Kind::Eigen => run_eigen(&basis, &mut out)?,
        Kind::Spectral => run_spectral(config, &basis, seed, &mut out)?,
        Kind::Observe => run_observe(config, &basis, seed, &mut out)?,
        Kind::Shape => run_shape(config, &basis, seed, &mut out)?,
        Kind::Timeopt => run_timeopt(config, &basis, seed, &mut out)?,
    };
    let summary = json!({ "kind": kind, "config_hash": config.hash(), "seed": config.seed, "result": summary });
    out.json("summary.json", &summary)?;

    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        kind,
        config_hash: config.hash(),
        seed: config.seed,
        basis_key,
        basis_cache,
        files: out.files,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST), text)?;
    Ok(manifest)
}

fn run_eigen(basis: &SpectralBasis, out: &mut Outputs) -> Result<Value> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["j", "lambda"])?;
    for (j, l) in basis.eigenvalues().iter().enumerate() {
        w.write_record([(j + 1).to_string(), l.to_string()])?;
    }
    out.write("eigenvalues.csv", &w.into_inner().map_err(|e| Error::Format(e.to_string()))?)?;
    Ok(json!({
        "modes": basis.len(),
        "eigenvalues": basis.eigenvalues(),
        "orthonormality_defect": basis.orthonormality_defect(),
        "max_divergence": basis.max_divergence(),
        "solver": basis.info(),
    }))
}

fn run_spectral(config: &ExperimentConfig, basis: &SpectralBasis, seed: u64, out: &mut Outputs) -> Result<Value> {
    let s = config.spectral.as_ref().expect("validated");
    let mask = config.spatial_mask(*basis.domain())?;
    let d = basis.domain();
    let opts = SubgradientOptions {
        iterations: s.iterations,
        restarts: s.restarts,
        seed,
        ..SubgradientOptions::default()
    };
    let mut rows = Vec::new();
    let mut lambdas = s.lambdas.clone();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    for &l in &lambdas {
        let c2 = l2_constant(basis, &mask, l)?;
        let c1 = l1_constant_estimate(basis, &mask, l, &opts)?;
        rows.push(ConstantRow {
            lambda: l,
            measure: mask.measure(),
            c2: c2.value,
            c1: c1.ratio,
            grid: format!("{}x{}", d.cells_x(), d.cells_y()),
            seed,
        });
    }
    let mut buf = Vec::new();
    write_constant_table(&rows, &mut buf)?;
    out.write("constants.csv", &buf)?;
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.lambda, r.c2)).collect();
    let fit = if pairs.len() >= 3 { Some(growth_fit(&pairs)?) } else { None };
    Ok(json!({ "mask_measure": mask.measure(), "rows": rows, "fit": fit }))
}

fn run_observe(config: &ExperimentConfig, basis: &SpectralBasis, seed: u64, out: &mut Outputs) -> Result<Value> {
    let o = config.observe.as_ref().expect("validated");
    let omega = config.spatial_mask(*basis.domain())?;
    let mask = match o.window {
        Some([a, b]) => SpaceTimeMask::cylinder_between(&omega, a, b),
        None => SpaceTimeMask::cylinder(&omega),
    };
    let topts = TelescopeOptions { probes: o.probes, seed };
    let report = certify_observability(basis, &mask, o.m_max, &topts)?;
    let ratio = observability_ratio(basis, &mask, o.restarts, seed)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &report.intervals {
        w.serialize(row)?;
    }
    out.write("intervals.csv", &w.into_inner().map_err(|e| Error::Format(e.to_string()))?)?;
    let null_control = match &o.u0 {
        Some(u0) => {
            if u0.len() > basis.len() {
                return Err(bad("observe.u0", format!("{} coefficients for {} modes", u0.len(), basis.len())));
            }
            let mut u0 = u0.clone();
            u0.resize(basis.len(), 0.0);
            let nc = dual_null_control(basis, &u0, &mask, &DualOptions { seed, ..DualOptions::default() })?;
            out.json("control.json", &nc.control)?;
            Some(json!({ "bound": nc.bound, "record": nc.record }))
        }
        None => None,
    };
    Ok(json!({
        "c_interp": report.c_interp,
        "c_obs": report.c_obs,
        "remainder": report.remainder,
        "schedule": report.schedule,
        "probes": report.probes,
        "ratio": ratio.ratio,
        "ratio_stagnated": ratio.stagnated,
        "null_control": null_control,
    }))
}

fn run_shape(config: &ExperimentConfig, basis: &SpectralBasis, seed: u64, out: &mut Outputs) -> Result<Value> {
    let s = config.shape.as_ref().expect("validated");
    if s.modes > basis.len() {
        return Err(bad("shape.modes", format!("J = {} exceeds the {} basis modes", s.modes, basis.len())));
    }
    let r = solve_relaxed_design(basis, s.horizon, s.fraction, s.modes)?;
    let d = basis.domain();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["cell", "x", "y", "a"])?;
    for (c, a) in r.design.values.iter().enumerate() {
        let (x, y) = d.cell_center(c);
        w.write_record([c.to_string(), x.to_string(), y.to_string(), a.to_string()])?;
    }
    out.write("design.csv", &w.into_inner().map_err(|e| Error::Format(e.to_string()))?)?;
    let mut buf = Vec::new();
    write_mode_table(basis, &r.design, s.horizon, s.modes, &mut buf)?;
    out.write("modes.csv", &buf)?;
    let truncation = truncation_certificate(basis, s.horizon, s.modes, &r.design, r.objective)?;
    let coeffs: Vec<f64> = match &s.coeffs {
        Some(c) => c.clone(),
        None => (0..basis.len()).map(|j| 1.0 / (1.0 + j as f64)).collect(),
    };
    let mc = randomized_constant_mc(basis, &r.design, &coeffs, s.horizon, s.mc_samples, seed, s.law)?;
    let check = evaluate_crand(basis, &r.design, s.horizon, s.modes)?;
    Ok(json!({
        "fraction": s.fraction,
        "horizon": s.horizon,
        "modes": s.modes,
        "objective": r.objective,
        "dual_bound": r.dual_bound,
        "gap": r.gap,
        "active": r.active,
        "fractional": r.fractional,
        "lp_iterations": r.iterations,
        "evaluated": check.value,
        "truncation": truncation,
        "monte_carlo": mc,
        "law": s.law,
    }))
}

fn run_timeopt(config: &ExperimentConfig, basis: &SpectralBasis, seed: u64, out: &mut Outputs) -> Result<Value> {
    let t = config.timeopt.as_ref().expect("validated");
    let omega = config.spatial_mask(*basis.domain())?;
    let opts = TimeOptOptions {
        tau_start: t.tau_start,
        dual: DualOptions { seed, ..DualOptions::default() },
        ..TimeOptOptions::default()
    };
    let mut u0 = t.u0.clone();
    if u0.len() > basis.len() {
        return Err(bad("timeopt.u0", format!("{} coefficients for {} modes", u0.len(), basis.len())));
    }
    u0.resize(basis.len(), 0.0);
    let res = minimal_time(basis, &u0, t.budget, &omega, t.r, t.bracket_tol, &opts)?;
    let mut buf = Vec::new();
    res.write_curve_csv(&mut buf)?;
    out.write("curve.csv", &buf)?;
    out.json("control.json", &res.control)?;
    let uniqueness = match t.compare_seed {
        Some(s2) => Some(uniqueness_check(basis, &u0, t.budget, &omega, t.r, t.bracket_tol, (seed, s2), &opts)?),
        None => None,
    };
    Ok(json!({ "result": res, "uniqueness": uniqueness }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub checks: Vec<Check>,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }
}

type Table = (Vec<String>, Vec<Vec<String>>);

fn read_csv(bytes: &[u8]) -> std::result::Result<Table, String> {
    let mut rd = csv::Reader::from_reader(bytes);
    let header = rd.headers().map_err(|e| e.to_string())?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rd.records() {
        rows.push(rec.map_err(|e| e.to_string())?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> std::result::Result<Vec<f64>, String> {
    let i = header.iter().position(|h| h == name).ok_or(format!("no column `{name}`"))?;
    rows.iter()
        .map(|r| {
            let f = r.get(i).ok_or(format!("short row in column `{name}`"))?;
            f.parse::<f64>().map_err(|_| format!("unparsable `{name}` value `{f}`"))
        })
        .collect()
}

/// Re-checks stored outputs against their hashes and invariants.
pub fn verify(manifest_path: &Path) -> Result<Verdict> {
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut v = Verdict { checks: Vec::new() };
    let mut files = std::collections::BTreeMap::new();
    for f in &manifest.files {
        let p = dir.join(&f.name);
        let bytes = fs::read(&p).map_err(|e| Error::Format(format!("missing file {}: {e}", p.display())))?;
        let h = sha_hex(&bytes);
        v.push(format!("hash:{}", f.name), h == f.sha256, format!("stored {} found {h}", f.sha256));
        files.insert(f.name.clone(), bytes);
    }
    let get = |name: &str| files.get(name).map(Vec::as_slice).ok_or_else(|| Error::Format(format!("manifest lists no {name}")));

    let basis = BasisArchive::from_json(std::str::from_utf8(get("basis.json")?).map_err(|e| Error::Format(e.to_string()))?)
        .and_then(SpectralBasis::from_archive);
    let basis = match basis {
        Ok(b) => {
            let o = b.orthonormality_defect();
            v.push("orthonormality", o <= ORTHO_TOL, format!("defect {o:e}"));
            let d = b.max_divergence();
            v.push("divergence", d <= DIV_TOL, format!("max {d:e}"));
            let l = b.eigenvalues();
            v.push("eigenvalues_sorted", l.windows(2).all(|w| w[0] <= w[1]), format!("{} values", l.len()));
            Some(b)
        }
        Err(e) => {
            v.push("basis_archive", false, e.to_string());
            None
        }
    };
    let summary: Value = serde_json::from_slice(get("summary.json")?)?;
    let res = &summary["result"];
    let num = |x: &Value| x.as_f64().unwrap_or(f64::NAN);

    match manifest.kind {
        Kind::Eigen => {
            let check = read_csv(get("eigenvalues.csv")?).and_then(|(h, r)| column(&h, &r, "lambda"));
            match (check, &basis) {
                (Ok(col), Some(b)) => {
                    let same = col.len() == b.len() && col.iter().zip(b.eigenvalues()).all(|(a, e)| a.to_bits() == e.to_bits());
                    v.push("eigenvalue_table", same, format!("{} rows", col.len()));
                }
                (Err(e), _) => v.push("eigenvalue_table", false, e),
                (_, None) => v.push("eigenvalue_table", false, "no basis to compare"),
            }
        }
        Kind::Spectral => match read_csv(get("constants.csv")?) {
            Ok((h, rows)) => {
                let cols = ["lambda", "measure", "c2", "c1"].map(|c| column(&h, &rows, c));
                match cols {
                    [Ok(l), Ok(m), Ok(c2), Ok(c1)] => {
                        v.push("c2_at_least_one", c2.iter().all(|&c| c >= 1.0 - 1e-9), format!("{c2:?}"));
                        let floor = (0..c1.len()).all(|i| c1[i] >= c2[i] / m[i].sqrt() * (1.0 - 1e-9));
                        v.push("l1_floor", floor, "c1 ≥ c2/|ω|^½");
                        let mono = (1..l.len()).all(|i| l[i] > l[i - 1] && c2[i] >= c2[i - 1] * (1.0 - 1e-12));
                        v.push("c2_monotone", mono, "nondecreasing in the cutoff");
                    }
                    _ => v.push("constants_table", false, "missing columns"),
                }
            }
            Err(e) => v.push("constants_table", false, e),
        },
        Kind::Observe => {
            match read_csv(get("intervals.csv")?).and_then(|(h, r)| column(&h, &r, "worst_ratio")) {
                Ok(w) => v.push("interval_inequalities", w.iter().all(|&x| x <= 1.0 + 1e-12), format!("{} intervals", w.len())),
                Err(e) => v.push("interval_inequalities", false, e),
            }
            let (c, c_obs, ratio) = (num(&res["c_interp"]), num(&res["c_obs"]), num(&res["ratio"]));
            let pts: Vec<f64> = res["schedule"]["points"].as_array().map(|a| a.iter().map(num).collect()).unwrap_or_default();
            let formula = pts.len() >= 2 && {
                let want = c * ((c + 0.5) / (pts[0] - pts[1])).exp();
                (want - c_obs).abs() <= 1e-12 * want
            };
            v.push("c_obs_formula", formula, format!("C = {c}, C_obs = {c_obs}"));
            v.push("certificate_dominates", c_obs >= ratio, format!("{c_obs} ≥ {ratio}"));
            if files.contains_key("control.json") {
                v.push("null_control_residual", num(&res["null_control"]["record"]["relative"]) <= 1e-2, "≤ 1e-2");
                bound_check(&mut v, get("control.json")?);
            }
        }
        Kind::Shape => {
            match read_csv(get("design.csv")?).and_then(|(h, r)| column(&h, &r, "a")) {
                Ok(a) => {
                    v.push("design_bounds", a.iter().all(|x| (0.0..=1.0).contains(x)), format!("{} cells", a.len()));
                    if let Some(b) = &basis {
                        let d = b.domain();
                        let vol = a.iter().sum::<f64>() * d.cell_area();
                        let want = num(&res["fraction"]) * d.area();
                        v.push("design_volume", (vol - want).abs() <= 1e-9 * d.area(), format!("{vol} vs {want}"));
                    }
                }
                Err(e) => v.push("design_bounds", false, e),
            }
            v.push("duality_gap", num(&res["gap"]).abs() <= 1e-7, format!("{}", res["gap"]));
            v.push("mc_z_score", num(&res["monte_carlo"]["z_score"]).abs() <= 4.0, format!("{}", res["monte_carlo"]["z_score"]));
        }
        Kind::Timeopt => {
            match read_csv(get("curve.csv")?).and_then(|(h, r)| Ok((column(&h, &r, "tau")?, column(&h, &r, "m_min")?))) {
                Ok((t, m)) => {
                    let ok = t.windows(2).all(|w| w[0] <= w[1]) && m.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
                    v.push("m_min_monotone", ok, format!("{} samples", t.len()));
                }
                Err(e) => v.push("m_min_monotone", false, e),
            }
            v.push("steering_residual", num(&res["result"]["residual"]) <= 1e-2, format!("{}", res["result"]["residual"]));
            bound_check(&mut v, get("control.json")?);
        }
    }
    Ok(v)
}

fn bound_check(v: &mut Verdict, bytes: &[u8]) {
    match serde_json::from_slice::<ControlSignal>(bytes) {
        Ok(c) => {
            let worst = c.entries.iter().map(|e| p_norm(&e.value, c.r)).fold(0.0, f64::max);
            v.push("control_bound", worst <= c.bound * (1.0 + 1e-9), format!("max |v|_r {worst} vs {}", c.bound));
        }
        Err(e) => v.push("control_bound", false, e.to_string()),
    }
}

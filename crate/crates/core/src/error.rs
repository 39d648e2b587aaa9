use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("mask is empty")]
    EmptyMask,

    #[error("point ({x}, {y}) lies outside the domain")]
    OutsideDomain { x: f64, y: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dense solver limited to {limit} unknowns, got {got}")]
    TooLarge { limit: usize, got: usize },

    #[error("eigensolver did not converge: {converged} of {wanted} pairs, worst residual {residual:e}")]
    NoConvergence {
        wanted: usize,
        converged: usize,
        residual: f64,
    },

    #[error("cutoff {cutoff} splits an eigenvalue cluster (gap {gap:e})")]
    ClusterSplit { cutoff: f64, gap: f64 },

    #[error("spectral completeness check failed: inertia reports {inertia} eigenvalues below {shift}, solver found {found}")]
    Incomplete {
        shift: f64,
        inertia: usize,
        found: usize,
    },

    #[error("singular or indefinite matrix: {0}")]
    Singular(String),

    #[error("degenerate Gram matrix: smallest eigenvalue {min_eig:e}")]
    DegenerateGram { min_eig: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("hypothesis fails at delta = {delta}")]
    HypothesisFails { delta: f64 },

    #[error("no admissible schedule: {0}")]
    NoSchedule(String),

    #[error("interpolation constant {supplied} insufficient; smallest sufficient value found {sufficient}")]
    InsufficientConstant { supplied: f64, sufficient: f64 },

    #[error("linear program infeasible: {0}")]
    Infeasible(String),

    #[error("basis too small: {0}")]
    BasisTooSmall(String),

    #[error("no bracket: M_min({tau_max}) = {m_min} still exceeds the budget {budget}")]
    NoBracket {
        tau_max: f64,
        m_min: f64,
        budget: f64,
    },

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}

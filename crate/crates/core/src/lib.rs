//! Numerical laboratory for observability of the 2D Stokes system on
//! measurable sets.
//!
//! The crate computes Dirichlet Stokes eigenmodes of a rectangle through
//! the clamped stream function, measures spectral and observability
//! constants on cell-union masks, solves the relaxed optimal sensor-shape
//! problem, and builds L∞ null controls and bang-bang time-optimal
//! controls from dual functionals. See `examples/` for one program per
//! capability.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod dual;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod lp;
pub mod observability;
pub mod rng;
pub mod rnorm;
pub mod runner;
pub mod shape;
pub mod smallness;
pub mod spacetime;
pub mod spectral;
pub mod stats;
pub mod timeopt;

pub use error::{Error, Result};
pub use grid::{build_domain, good_time_set, GoodTimeSet, RectDomain, SpaceTimeMask, SpatialMask};
pub use spectral::{
    solve_modes, synthesize_field, Cutoff, Method, ModalState, SpectralBasis, StaggeredField, VelocityMode,
};

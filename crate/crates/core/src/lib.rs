//! Numerical laboratory for hyperbolic relaxation approximations of parabolic systems.
//!
//! The crate builds semilinear relaxation systems from parabolic targets, checks their
//! structural hypotheses on sampled symbols, integrates them with a stiff IMEX scheme
//! on periodic grids and measures how they approach the parabolic limit as the
//! relaxation parameter shrinks.

// `!(x > 0.0)` guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod builder;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod hypersolver;
pub mod io;
pub mod linalg;
pub mod parasolver;
pub mod spectral;
pub mod system;
pub mod validator;

pub use error::{Error, Result};
pub use grid::SpatialGrid;
pub use system::{
    Coefficient, FieldState, ParabolicTarget, QuasilinearDivergence, ReactionDiffusion, RelaxationSystem, StiffSource,
    Symmetrizer, Transport,
};

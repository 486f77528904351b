use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular stiff jacobian at x={x:?}, u={u:?} (smallest singular value {sigma_min:e})")]
    SingularJacobian { x: Vec<f64>, u: Vec<f64>, sigma_min: f64 },

    #[error("non-finite value in {what} at x={x:?}")]
    NonFinite { what: String, x: Vec<f64> },

    #[error(
        "matrix is not symmetric positive definite ({what}): smallest eigenvalue {min_eigenvalue:e} at {location}"
    )]
    NotPositiveDefinite {
        what: String,
        min_eigenvalue: f64,
        location: String,
    },

    #[error("singular decoupling transform (|det P| = {0:e})")]
    SingularTransform(f64),

    #[error("conserved-quantity property violated: |P^I B(x, W)| = {residual:e} at x={x:?}, W={w:?}")]
    NotConserved { residual: f64, x: Vec<f64>, w: Vec<f64> },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    Cfl { dt: f64, bound: f64 },

    #[error("newton iteration did not converge in {iterations} iterations (residual {residual:e} at cell {cell})")]
    Newton {
        iterations: usize,
        residual: f64,
        cell: usize,
    },

    #[error("non-finite state at t={t} in cell {cell}")]
    Blowup { t: f64, cell: usize },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("fixed-point iteration did not converge in {iterations} iterations (update {update:e})")]
    FixedPoint { iterations: usize, update: f64 },

    #[error("invalid options: {0}")]
    Options(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

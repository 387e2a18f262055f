use thiserror::Error;

/// Errors raised by the plate library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid material: {0}")]
    InvalidMaterial(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid has {nx}x{ny} nodes but the {what} stencil needs at least {min} per axis")]
    GridTooSmall {
        what: &'static str,
        nx: usize,
        ny: usize,
        min: usize,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value {value} at node ({i}, {j}) = ({x1}, {x2})")]
    NonFinite {
        i: usize,
        j: usize,
        x1: f64,
        x2: f64,
        value: f64,
    },

    #[error("thickness must be positive: {name} = {value} at ({x1}, {x2})")]
    NonPositiveThickness {
        name: &'static str,
        x1: f64,
        x2: f64,
        value: f64,
    },

    #[error("expression parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("conjugate gradient did not converge: {iterations} iterations, relative residual {rel_residual:e} (target {tol:e})")]
    CgBreakdown {
        iterations: usize,
        rel_residual: f64,
        tol: f64,
    },

    #[error("growth tensor is not invertible (det = {det:e}) at h = {h}, x = ({x1}, {x2}, {x3})")]
    GrowthNotInvertible {
        h: f64,
        x1: f64,
        x2: f64,
        x3: f64,
        det: f64,
    },

    #[error(
        "line search failed at iteration {iteration}: no descent along the search direction (grad norm {grad_norm:e})"
    )]
    LineSearchFailed { iteration: usize, grad_norm: f64 },

    #[error("non-finite energy at iteration {iteration}")]
    NonFiniteEnergy { iteration: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

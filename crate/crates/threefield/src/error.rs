//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-manifold mesh: edge ({0}, {1}) is shared by {2} cells")]
    NonManifold(usize, usize, usize),

    #[error("mesh file format error: {0}")]
    MeshFormat(String),

    #[error("singular system ({what}){}", pivot.map(|p| format!(" at pivot row {p}")).unwrap_or_default())]
    Singular { what: String, pivot: Option<usize> },

    #[error(
        "Newton diverged{} after {iterations} iterations (residual {residual:.3e}, history {history:?})",
        step.map(|s| format!(" at time step {s}")).unwrap_or_default()
    )]
    NewtonDiverged {
        step: Option<usize>,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("interlacing violated at level {n}, index {k}")]
    Interlacing { n: usize, k: usize },
    #[error("infeasible contour geometry: {0}")]
    Contour(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("singular determinant: {0}")]
    Singular(String),
    #[error("guard exceeded: {0}")]
    Guard(String),
    #[error("numerical blow-up: {0}")]
    BlowUp(String),
    #[error("simulation error: {0}")]
    Simulation(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("replica {index} (seed {seed:#018x}) failed: {msg}")]
    Replica { index: u64, seed: u64, msg: String },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {x}")))
    }
}

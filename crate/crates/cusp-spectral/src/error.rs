use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("unsupported dimension d = {0} (only d = 1 is implemented here)")]
    UnsupportedDimension(usize),
    #[error("reduction did not terminate after {0} iterations")]
    NonTermination(usize),
    #[error("lambda = {lambda} is within {distance:.3e} of the indicial root {root}")]
    NearRoot {
        lambda: Complex64,
        root: Complex64,
        distance: f64,
    },
    #[error("contour abscissa {rho} passes within {distance:.3e} of the root {root}")]
    ContourOnRoot {
        rho: f64,
        root: Complex64,
        distance: f64,
    },
    #[error("circle around {center} encloses or grazes another root {other}")]
    InvalidEnclosure { center: Complex64, other: Complex64 },
    #[error("lambda = {lambda} is a pole of the regularized pairing (j = {j}, k = {k})")]
    Pole { lambda: Complex64, j: usize, k: usize },
    #[error("s = {s} lies on a root crossing ({detail})")]
    Crossing { s: Complex64, detail: String },
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("internal consistency error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

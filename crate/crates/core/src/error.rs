use thiserror::Error;

use crate::ode::OdeError;
use crate::quad::QuadError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {key}: {message}")]
    Invalid { key: String, message: String },
    #[error("resonant frequency: 2aω/π = {ratio} is within {tol:e} of an integer")]
    ResonantFrequency { ratio: f64, tol: f64 },
    #[error("integrator failure: {0}")]
    Ode(#[from] OdeError),
    #[error("quadrature failure: {0}")]
    Quad(#[from] QuadError),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("not converged: {0}")]
    Unconverged(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(key: &str, message: impl Into<String>) -> Error {
    Error::Invalid { key: key.to_string(), message: message.into() }
}

pub(crate) fn domain(message: impl Into<String>) -> Error {
    Error::Domain(message.into())
}

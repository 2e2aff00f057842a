//! Spectral density of half-line Schrödinger operators
//! `−φ'' + (q(x) + c·sin(2ωx+δ)/(x+1) + q₁(x))φ = λφ` with periodic `q`,
//! near the resonance points where the density develops power-law zeroes.

pub mod error;
pub mod floquet;
pub mod linalg;
pub mod model_system;
pub mod ode;
pub mod potentials;
pub mod quad;
pub mod resonance;
pub mod special;
pub mod spectral;
pub mod verify;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};

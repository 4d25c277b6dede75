//! Compressive-sensing parameter estimation for free-space continuous-variable
//! QKD.
//!
//! The atmospheric link is modelled as an ensemble of stable sub-channels,
//! each with its own transmittance `T_i` and excess noise `ε_i`. Within a
//! sub-channel the per-symbol transfer vector is constant, so its unitary DFT
//! is a single impulse at the DC bin; the estimators recover that impulse
//! with orthogonal matching pursuit from either
//!
//! * a random subset of disclosed Alice/Bob quadrature pairs
//!   ([`estimator::variables`]), or
//! * Bob's measured variance together with the public modulation variance
//!   ([`estimator::statistics`]), which consumes no key material.
//!
//! The estimated ensemble means feed the asymptotic reverse-reconciliation
//! key rate in [`security`].
//!
//! All variances are in shot-noise units: the vacuum quadrature variance is 1.

pub mod channel;
pub mod cs;
pub mod error;
pub mod estimator;
#[cfg(any(test, feature = "oracles"))]
pub mod oracles;
pub mod security;
pub mod seed;

pub use error::{Error, Result};

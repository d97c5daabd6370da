//! Finite-section laboratory for commutator methods on unitary operators.
//!
//! Everything is dense and exact-unitary where it matters: pinned GGT blocks,
//! a truncated Koopman–Bernoulli shift, band-operator algebra in normal form,
//! the iterated-commutator machinery behind regularized resolvents, and the
//! weighted-resolvent and correlation diagnostics built on top of them.

pub mod bandalg;
pub mod commutators;
pub mod correlations;
pub mod error;
pub mod lap;
pub mod models;
pub mod opcore;
pub mod random;
pub mod spectral;

pub use error::{Error, Result};
pub use faer::c64;

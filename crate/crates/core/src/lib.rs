//! Numerical laboratory for weak-measurement spin squeezing.
//!
//! The crate pairs an exact analytic engine ([`quad`]) with a brute-force
//! truncated-Hilbert-space simulator ([`fock`]); [`protocols`] builds the
//! physical schemes on top of both, [`gaussian`] covers the effective
//! twisting limits, [`optimize`] supplies the parameter searches, and
//! [`harness`] drives batch runs from configuration files.

pub mod error;
pub mod fock;
pub mod gaussian;
pub mod harness;
pub mod optimize;
pub mod protocols;
pub mod quad;

pub use error::{Error, Result};

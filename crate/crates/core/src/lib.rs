//! Desk-scale workbench for composable cryptographic constructions.
//!
//! The crate implements min-entropy and guessing-probability tooling over
//! finite-dimensional quantum states, auditable hash families and extractors,
//! an error-correction plus privacy-amplification key distillation pipeline,
//! and a conjugate-coding authentication scheme with key recycling. Every
//! error bound the constructions claim can be checked against an exact or
//! bracketed measurement through [`harness`].
//!
//! Bit order is uniform across the crate: index 0 of a [`Bitstring`] is the
//! leftmost, most significant bit.

pub mod bitlinalg;
pub mod distill;
pub mod entropy;
pub mod error;
pub mod fsauth;
pub mod harness;
pub mod hashing;
pub mod quantum;

pub use bitlinalg::{Bitstring, GfElement, Gf2Matrix, LinearCode};
pub use entropy::{Bracket, ClassicalJoint, Method};

pub use error::{Error, Result};
pub use quantum::{CqState, DensityOperator, KrausChannel};

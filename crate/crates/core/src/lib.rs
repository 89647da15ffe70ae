//! Quantum process tomography over mutually unbiased bases.
//!
//! Input states and measurements are both drawn from a complete set of
//! D+1 mutually unbiased bases, and the process is expanded in the same
//! overcomplete set of D^2 + D projectors. The process matrix is recovered
//! from measured probabilities through the pseudoinverse of the trace
//! matrix `beta`, optionally refined to the nearest physical estimate.

// Negated float comparisons in this crate are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channels;
pub mod error;
pub mod experiments;
pub mod gf2m;
pub mod mub;
pub mod numerics;
pub mod pauli;
pub mod tomography;

pub use error::{Error, Result};

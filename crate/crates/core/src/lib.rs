//! Numerical toolkit for Kleinian groups acting on hyperbolic 3-space:
//! orbit enumeration, random walks, Patterson-Sullivan and harmonic measures,
//! Green metrics and measure comparison on the limit set.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conformal;
pub mod error;
pub mod green;
pub mod group;
pub mod moebius;
pub mod rng;
pub mod sample;
pub mod singularity;
pub mod walk;

pub use error::{Error, Result};

//! Activation-function search with Cartesian genetic programming.
//!
//! The crate evolves scalar activation functions and compares five ways of
//! choosing them for a fixed image classifier: the standard baseline, random
//! search, single-function evolution, three-function evolution, and
//! three-population cooperative coevolution.
//!
//! * [`afprims`]: the primitive set with exact derivatives.
//! * [`cgp`]: genome encoding, decoding, mutation and the (1+lambda) loop.
//! * [`nn`]: a small CPU training engine for the two fixed architectures.
//! * [`data`]: IDX and USPS loaders and the three-way split.
//! * [`search`]: the five search methods over a shared fitness protocol.
//! * [`harness`]: the experiment runner, reports and command line.

pub mod afprims;
pub mod cgp;
pub mod data;
pub mod error;
pub mod harness;
pub mod nn;
pub mod search;
pub mod seed;

pub use error::{Error, Result};

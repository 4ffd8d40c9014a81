//! Grounded video description.

pub mod attention;
pub mod autodiff;
pub mod corpus;
pub mod decoder;
pub mod error;
pub mod grounding;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod params;
pub mod regions;
pub mod sample;
pub mod tensor;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};

//! Moment-matched hidden-direction distributions, directional derivative
//! tensors, mollified polynomial threshold functions and low-degree
//! advantage experiments.

pub mod advantage;
pub mod anticoncentration;
pub mod cli;
pub mod distributions;
pub mod error;
pub mod hermite;
pub mod mollifier;
pub mod rng;
pub mod stats;
pub mod tensor_poly;

pub use error::{LabError, Result};

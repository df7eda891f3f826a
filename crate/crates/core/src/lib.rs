//! Gated multiple feedback network for single-image super-resolution:
//! tensors with reverse-mode differentiation, the network, training,
//! image processing and evaluation metrics.

pub mod error;
pub mod imaging;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};

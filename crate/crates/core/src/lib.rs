//! Pruning-at-initialization lab: a small reverse-mode autodiff engine,
//! two reference networks, saliency-based pruning, weight treatments and
//! distribution distances between the resulting weight populations.

pub mod analysis;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod pruning;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod treatments;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};

//! Landmark feature convolution and its supporting machinery.
//!
//! - [`tensor`]: dense tensors, reverse-mode autograd, Adam, checkpoints.
//! - [`landmark`]: dynamic max pooling scans and the landmark feature convolution layer.
//! - [`convnets`]: point-based baselines (1×1, dilated, global attention) and brute-force oracles.
//! - [`synthground`]: deterministic synthetic scenes with referring expressions.
//! - [`net`]: a miniature one-stage grounding network, its loss, training and evaluation.

pub mod convnets;
pub mod error;
pub mod landmark;
pub mod net;
pub mod synthground;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Graph, Scalar, Tensor, Var};

//! Minimal NCHW tensors with reverse-mode differentiation.
//!
//! Every differentiation rule is expressed with differentiable operations, so
//! gradients can be differentiated again (needed for gradient penalties).

pub mod kernels;
pub mod tensor;
pub mod var;

pub use kernels::{PadMode, Padding};
pub use tensor::{Shape, Tensor};
pub use var::{grad, Var};

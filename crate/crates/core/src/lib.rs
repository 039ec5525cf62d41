pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod fft;
pub mod nets;
pub mod stream;
pub mod training;

pub use error::{Error, Result};

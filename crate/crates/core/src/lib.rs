//! Decentralized structural damage detection: one small 2-D CNN per
//! structural element, trained on raw tri-sensor acceleration frames, plus a
//! shear-frame vibration simulator that generates the training data.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod exec;
pub mod gradcheck;
pub mod nn;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod structsim;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::Tensor;

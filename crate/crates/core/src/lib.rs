// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data_gen;
pub mod det_equiv;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod mc_harness;
pub mod rng;
pub mod special;

pub use error::{Error, Result};

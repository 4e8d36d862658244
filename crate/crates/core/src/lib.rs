// Guards like !(x > 0.0) reject NaN on purpose; numeric kernels index in lockstep.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bessel;
pub mod cli;
pub mod eigen;
pub mod error;
pub mod grid;
pub mod levy;
pub mod measure;
pub mod quad;
pub mod simulate;
pub mod verify;

pub use error::{Error, Result};

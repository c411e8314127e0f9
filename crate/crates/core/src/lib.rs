#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod combat;
pub mod data;
pub mod error;
pub mod fractal;
mod linalg;
pub mod pipeline;
pub mod predict;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classical;
pub mod cli;
pub mod ensemble;
pub mod error;
pub mod format;
pub mod gaussian;
pub mod linalg;
pub mod quantum;
pub mod rng;
pub mod trajectories;

pub use error::{Error, Result};

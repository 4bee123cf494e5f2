//! Rough-path tools for fast-slow systems driven by fractional Brownian motion.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod controlled;
pub mod error;
pub mod experiment;
pub mod fastslow;
pub mod fbm;
pub mod io;
pub mod lift;
pub mod path;
pub mod rde;
pub mod rng;
pub mod stats;
pub mod variation;
pub mod verify;

pub use error::{Error, Result};
pub use path::{GridPath, HurstIndex};

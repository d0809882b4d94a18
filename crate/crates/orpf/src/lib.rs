//! Optimal reactive power flow for meshed grids with tap-changing
//! transformers.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod ad;
pub mod admittance;
pub mod error;
pub mod netmodel;
pub mod nlp;
pub mod objectives;
pub mod optimize;
pub mod pipeline;
pub mod powerflow;
pub mod taps;
pub mod solver;

pub use error::{Error, Result};

//! Execution-flow spectra and scalp indicators for trade tick streams.
//!
//! Trades are folded into exponentially weighted polynomial moments, the moments become
//! operator matrices, and generalized eigenproblems on those matrices give the states from
//! which the indicators are read.

pub mod basis;
pub mod error;
pub mod flow;
pub mod io;
pub mod moments;
pub mod operators;
pub mod pipeline;
pub mod scalp;

pub use error::{Error, Result};

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod synth;
pub mod training;

pub use error::{Error, Result};

pub mod baselines;
pub mod chordset;
pub mod cli;
pub mod dsp;
pub mod error;
pub mod evalkit;
pub mod slotcore;
pub mod trainer;

pub use error::{Error, Result};

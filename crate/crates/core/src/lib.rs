pub mod baselines;
pub mod cli;
pub mod error;
mod codec;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod numkernel;
pub mod train;

pub use error::{Error, Result};

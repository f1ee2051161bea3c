pub mod baseline;
pub mod checkpoint;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod model;
pub mod optim;
pub mod srnn;
pub mod tasks;
pub mod tensor;

pub use error::{Error, Result};

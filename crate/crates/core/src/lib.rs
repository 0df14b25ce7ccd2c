pub mod agent;
pub mod config;
pub mod env;
pub mod error;
pub mod harness;
pub mod mixer;
pub mod nn;
pub mod replay;
pub mod taco;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};

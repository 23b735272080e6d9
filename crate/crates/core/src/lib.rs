pub mod analysis;
pub mod bench;
pub mod cli;
pub mod autodiff;
pub mod error;
pub mod graspworld;
pub mod metalearn;
pub mod nets;
pub mod seed;
pub mod taskset;

pub use error::{Error, Result};

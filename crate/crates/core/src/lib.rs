pub mod baseline;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod kernel;
pub mod loss;
pub mod model;
pub mod report;
pub mod retrieval;
pub mod rng;
pub mod train;

pub use error::{Error, Result};

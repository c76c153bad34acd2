pub mod cli;
pub mod error;
pub mod fuzzy_core;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod tokenization;
pub mod transformer;

pub use error::{Error, Result};

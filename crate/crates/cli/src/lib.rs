//! Dataset and image I/O, configuration, preprocessing, and the pipeline
//! behind the `photostereo` command.

pub mod config;
pub mod dataset;
mod error;
pub mod evaluate;
pub mod formats;
pub mod output;
pub mod pipeline;
pub mod preprocess;
pub mod scene;
pub mod viz;

pub use error::{Error, Result};

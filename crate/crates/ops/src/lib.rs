//! Versioned dataset and model hubs, prediction batches, drift monitoring
//! and the commands behind the `ttf` tool.

pub mod batch;
pub mod commands;
pub mod config;
pub mod drift;
pub mod error;
pub mod events;
pub mod hub;

pub use commands::{run, Command, Options};
pub use config::PipelineConfig;
pub use error::{OpsError, Result};
pub use hub::Hub;

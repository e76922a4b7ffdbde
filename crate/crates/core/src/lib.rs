//! Neural implicit surface reconstruction with monocular geometric cues.

pub mod autodiff;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod field;
pub mod math;
pub mod mesh;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod oracle;
pub mod render;
pub mod train;

pub use error::{Error, Result};

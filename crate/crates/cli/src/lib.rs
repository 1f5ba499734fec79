//! Command-line front-end and HTTP service for the protoforge toolkit.

pub mod commands;
pub mod error;
pub mod jobs;
pub mod model;
pub mod registry;
pub mod service;

pub use error::{AppError, AppResult};

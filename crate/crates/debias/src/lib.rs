//! File formats, spectrogram cache and experiment drivers around
//! `debias-core`.

pub mod cache;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod fsutil;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod specfile;
pub mod wav;

pub use error::{AppError, AppResult};

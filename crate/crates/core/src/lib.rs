//! Numerical core for confound-robust respiratory-disease classification from
//! cough audio.
//!
//! The pipeline runs from raw mono clips to log-power spectrograms, through a
//! CNN-LSTM feature encoder with a disease classifier and an adversarial bias
//! predictor, and ends in cross-validated and confound-balanced evaluations.
//! Everything here is pure computation over in-memory buffers; file formats,
//! caching and the command line live in the `debias` crate.
#![no_std]

extern crate alloc;

pub mod audio;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fft;
mod math;
pub mod model;
pub mod neural;
pub mod rng;
pub mod spectrogram;
pub mod synth;

pub use error::{Error, Result};

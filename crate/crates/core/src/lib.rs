//! Note-onset transcription trained from per-window note counts.
//!
//! The crate turns onset histograms (how many times each pitch starts inside a
//! time window) into strongly aligned frame labels by picking the most likely
//! local peaks of a model's posteriorgram, and alternates that label estimate
//! with model training in an expectation-maximization loop.
//!
//! Modules, bottom-up:
//!
//! - [`events`]: note onsets, SMF ingestion, windows, histograms.
//! - [`grid`]: frame grid, posteriorgrams, label matrices, matrix files.
//! - [`peakpick`]: local peaks, histogram-constrained peak picking, distances.
//! - [`metrics`]: onset-tolerance and timing-free note scoring.
//! - [`synth`]: synthetic scores, additive rendering, spectral features.
//! - [`model`]: per-frame transcriber, weighted BCE, Adam, training.
//! - [`em`]: the alternating label-estimation / training loop.
//! - [`cli`]: the `countem` command-line tool.

pub mod cli;
pub mod corpus;
pub mod em;
mod error;
pub mod events;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod model;
pub mod peakpick;
pub mod seeding;
pub mod synth;

pub use error::{Error, Result};

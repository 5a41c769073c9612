//! Standardized Kalman filtering (SKF) for spatio-temporal EEG source
//! localization.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] builds a spherical head, an electrode array, a gridded
//!   source space and the average-referenced lead field.
//! * [`signal`] generates the two-source evoked-response ground truth and
//!   noisy measurements at a prescribed peak-SNR.
//! * [`priors`] turns the PM-SNR / EP-SNR decibel parameters into the prior
//!   and process-noise variances of a random-walk state model.
//! * [`filter`] and [`smoother`] implement the dense standardized Kalman
//!   filter with a tunable standardization exponent and the RTS backward pass.
//! * [`subspace`] runs the same recursions exactly in the row space of the
//!   lead field, which is what makes full-size head models tractable.
//! * [`metrics`] scores reconstructions. [`experiment`] drives parameter
//!   sweeps on top of it and [`plot`] renders SVG time-series figures.

// Negated comparisons are used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod export;
pub mod filter;
pub mod geometry;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod plot;
pub mod priors;
pub mod signal;
pub mod smoother;
pub mod subspace;

pub use error::{Error, Result};

/// Version string echoed into every result record.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

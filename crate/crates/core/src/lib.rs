//! Statistical engines for crowd-powered labeling and human evaluation of
//! generative models.
//!
//! * [`corpus`]: item manifests and randomized, rate-capped RSVP streams.
//! * [`decoder`]: delay calibration and likelihood decoding of keypresses.
//! * [`cascade`]: multi-class labeling by successive binary passes.
//! * [`simulator`]: synthetic workers and evaluators.
//! * [`staircase`]: the adaptive-exposure staircase and its scoring.
//! * [`metrics`]: untimed error rates, qualification, bootstrap and tests.

// `!(x > 0.0)` is the NaN-rejecting form of every positivity check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cascade;
pub mod corpus;
pub mod decoder;
pub mod error;
pub mod metrics;
pub mod numeric;
pub mod pipeline;
pub mod seed;
pub mod simulator;
pub mod staircase;

pub use error::{Error, Result};

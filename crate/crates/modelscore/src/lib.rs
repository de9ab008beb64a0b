//! Compare probabilistic models on held-out data.
//!
//! Models that output probability distributions over discrete outcomes are
//! scored per observation with a proper scoring rule (logarithmic, quadratic,
//! spherical, or any Bregman divergence), and paired significance tests decide
//! whether one model's mean score is significantly lower than another's.
//! Lower always means better.
//!
//! The crate is organised around the evaluation pipeline:
//!
//! * [`scoring`] — per-observation losses, divergences, and generalized
//!   entropies for the supported rules.
//! * [`stats`] — paired t-test and Wilcoxon signed-rank test with in-house
//!   special-function numerics and an exact small-sample null distribution.
//! * [`dataset`] — parsing and validation of JSONL/CSV prediction files.
//! * [`comparison`] — mean scores, perplexity, pairwise tests, reports.
//! * [`simulator`] — synthetic ground-truth experiments that check the whole
//!   pipeline recovers the true model ordering.
//! * [`cli`] — the `modelscore` executable (`score`, `compare`, `simulate`).
//!
//! ```
//! use modelscore::scoring::{log_loss, ProbabilityVector, OutcomeIndex};
//!
//! let q = ProbabilityVector::new(vec![0.5, 0.5]).unwrap();
//! let loss = log_loss(&q, OutcomeIndex(0)).unwrap();
//! assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
//! ```

// Guards of the form `!(x > 0.0)` are deliberate: they reject NaN along
// with the out-of-range values, which `x <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod comparison;
pub mod dataset;
mod error;
pub mod kahan;
pub mod scoring;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};

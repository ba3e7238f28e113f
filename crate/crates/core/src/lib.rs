//! Baseline-referenced comparison of driving sessions.
//!
//! Each distraction session of a driver is aligned to the same driver's
//! distraction-free baseline with dynamic time warping, split into
//! before/during/after segments, and summarised by coarse and fine distances.
//! Paired tests across drivers then compare the before and during segments.

// `!(a < b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod dtw;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod report;
pub mod segmentation;
pub mod simgen;
pub mod stats;

pub use error::{Error, Result};

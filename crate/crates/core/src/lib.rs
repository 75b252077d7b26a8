//! Streaming segmentation and fiducial-point extraction for quasi-periodic
//! signals.
//!
//! The pipeline detects cycle endpoints by fusing a domain heuristic (how
//! steep the upstroke after a candidate minimum is) with a morphology
//! likelihood derived from streaming subsequence DTW against an annotated
//! template, then carries the template's fiducial annotations onto each
//! detected cycle through the warping path. A self-updating template
//! ensemble tracks evolving morphology. Reference baselines and a full
//! evaluation harness (classification, timing, and interbeat-interval
//! agreement) are included.

pub mod baseline;
pub mod dtw;
mod error;
pub mod eval;
pub mod fiducial;
pub mod pipeline;
pub mod segment;
pub mod signal;
pub mod template;

pub use error::{Error, Result};

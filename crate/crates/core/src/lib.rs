//! Online anomaly detection for piecewise-stationary time series.
//!
//! The pipeline detects breakpoints with a kernel changepoint method, scores
//! each point against its current segment with a robust nonconformity
//! measure, converts scores to empirical p-values against a calibration set,
//! and controls the false discovery rate over a sliding active set with a
//! modified Benjamini-Hochberg procedure.

pub mod bench;
pub mod core;
pub mod datagen;
pub mod detector;
pub mod error;
pub mod estimators;
pub mod kernels;
pub mod calibration;
pub mod changepoint;
pub mod multitest;
pub mod scoring;
pub mod uncertainty;

pub use crate::core::{DetectionRecord, RunRng, Segmentation, SegmentView, TimeSeries};
pub use crate::error::Error;

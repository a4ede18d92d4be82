//! Quality-controlled semi-supervised segmentation of synthetic cine MR.
//!
//! A segmenter is trained on a reduced labelled set, its full-cycle outputs
//! on unlabelled cases are scored by a classifier that only looks at the
//! downstream area/volume curves, and the top-ranked cases are fed back as
//! pseudo-labelled training data. The crate is sans-IO apart from the
//! cohort, checkpoint and run-directory formats.

pub mod crf;
pub mod curves;
pub mod error;
pub mod models;
pub mod phantom;
pub mod pipeline;
pub mod qc;
pub mod rng;
pub mod stats;
pub mod volume;

pub use error::{Error, Result};

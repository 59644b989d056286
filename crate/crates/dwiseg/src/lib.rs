//! Transfer-learning segmentation workbench for dual-domain DWI phantoms.
//!
//! The crate trains a small encoder/decoder network (inception sub-blocks,
//! residual skip connections) to segment prostate whole gland (WG) and
//! transition zone (TZ) masks, then adapts a source-domain model to a shifted
//! target domain by fine-tuning a configurable subset of parameter groups.
//!
//! Everything is deterministic given the seeds in the run configuration:
//! phantom generation, cohort splits, weight initialization, training,
//! post-processing and result persistence.

pub mod data;
pub mod error;
pub mod experiment;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod postprocess;
pub mod transfer;

pub use error::{Error, Result};

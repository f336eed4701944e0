//! Self-supervised flip-pretext pretraining and transfer pipeline for
//! binary CT-scan classification.

pub mod dataset;
pub mod error;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};

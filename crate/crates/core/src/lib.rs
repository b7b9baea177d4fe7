//! Binary classification when the training labels are corrupted.
//!
//! Data models, label-noise mechanisms, kNN / SVM / LDA classifiers, closed-form
//! risk theory and a replicated Monte Carlo harness.

pub mod classifiers;
pub mod error;
pub mod eval;
pub mod generators;
pub mod linalg;
pub mod noise;
pub mod numerics;
pub mod plan;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
pub use generators::{DataModel, DataSet, GaussianPairModel, LabelSource, QuadraticUniformModel};
pub use noise::{NoiseBounds, NoiseSpec};

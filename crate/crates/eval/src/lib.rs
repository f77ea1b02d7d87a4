//! Single-sample-gallery face identification evaluation: cosine matching,
//! CMC and ROC curves, and the open-world protocol.

pub mod curves;
pub mod error;
pub mod features;
pub mod manifest;
pub mod matching;
pub mod openworld;
pub mod report;
pub mod synthetic;

pub use error::EvalError;
pub use features::FeatureSet;
pub use manifest::EvalManifest;
pub use matching::{match_all, ScoreMatrix};

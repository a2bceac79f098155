//! Fusion of front-camera frame pairs with semantic-map features for
//! steering angle and speed regression.

pub mod data_model;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod ingest;
pub mod nn;
pub mod synth;
pub mod trainer;

pub use data_model::{
    FramePair, ImageStats, NormalizationStats, SampleKey, SemanticFeatureVector, TargetPair,
    TargetStats,
};
pub use error::{Error, Result};

//! The camera + semantic-map fusion network.

pub mod backbone;
pub mod config;
pub mod model;

pub use backbone::Backbone;
pub use config::{BackboneKind, BackboneSpec, FusionConfig, RunMode, SkipSource};
pub use model::{FeatureScaler, FusionBatch, FusionModel, ModelOutput};

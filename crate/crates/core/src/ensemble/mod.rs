//! Likelihood-weighted ensembles over binned training-target distributions.

pub mod binning;
pub mod combine;
pub mod spec;

pub use binning::{fit_distribution, BinnedDistribution, ANGLE_BINS, SPEED_BINS};
pub use combine::{combine, weighted_mean, Weighting};
pub use spec::{assemble, EnsembleSpec, Member, PredictionStore, TargetDistributions};

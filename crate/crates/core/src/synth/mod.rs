//! Synthetic data with known ground truth.

mod capability;
mod distortion;
mod nestedness;
mod planted;

use thiserror::Error;

pub use capability::{generate_nested_panel, CapabilityModel, Endowment, Requirements, SyntheticPanel};
pub use distortion::{
    distortion_samples, ranking_distortion_study, DistortionBin, DistortionConfig, DistortionReport, StepDistribution,
};
pub use nestedness::{degree_preserving_null, nestedness_test, nodf, NestednessReport};
pub use planted::{planted_trajectories, reflect, PlantedDynamics, PlantedRun, Start, Surface};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("degenerate draw: {0}")]
    DegenerateModel(String),
}

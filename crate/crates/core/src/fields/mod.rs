//! Grid fields over the unit square: box averages, kernel smoothing and regression,
//! finite-difference gradients, the gradient-flow fit, column minima with bootstrap
//! intervals, and stationarity diagnostics.

mod gradient;
mod grid;
mod minima;
mod potential;
mod smooth;
mod stationarity;

use thiserror::Error;

pub use gradient::gradient;
pub use grid::{box_average, Grid, GridField, Sample};
pub use minima::{
    bootstrap_column_minima, column_minima, column_profile_minima, curve_distance, BootstrapConfig, ColumnMinimum,
    CurveDistance, MinimaCurve,
};
pub use potential::{
    direction_agreement, fit_potential, fit_potential_with_intercept, DirectionTest, LineFit, PotentialFit,
};
pub use smooth::{gaussian_smooth, gaussian_smooth_axes, nadaraya_watson};
pub use stationarity::{stationarity_diagnostics, Stationarity};

#[derive(Debug, Error)]
pub enum FieldsError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("sample #{index} at ({x}, {y}) lies outside the unit square")]
    OutOfDomain { index: usize, x: f64, y: f64 },
    #[error("payload dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),
    #[error("axis {axis}: only {cells} co-populated cells, need at least 3")]
    InsufficientOverlap { axis: usize, cells: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

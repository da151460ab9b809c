use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineError, Stage};
use crate::fields::{BootstrapConfig, Grid};
use crate::ingest::{CleaningConfig, TradeSchema};
use crate::market::Pooling;
use crate::metrics::MetricsConfig;
use crate::synth::{CapabilityModel, PlantedDynamics};

/// Where the run's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    /// Long-format trade CSV plus a GDP-per-capita CSV.
    Files {
        trade: Option<PathBuf>,
        gdp: Option<PathBuf>,
        #[serde(default)]
        schema: TradeSchema,
    },
    /// A capability-model panel generated in the ingest stage.
    Capability(CapabilityModel),
    /// Trajectories descending a known potential, placed directly on the plane.
    /// Ingest, metrics and market are skipped and `H` is the planted surface.
    Planted(PlantedDynamics),
}

/// Smoothing bandwidths in cell units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bandwidths {
    /// Gaussian smoothing of the `H` field before differentiation.
    pub h: f64,
    /// Smoothing of column profiles along y before locating minima.
    pub minima: f64,
}

impl Default for Bandwidths {
    fn default() -> Self {
        Self { h: 0.5, minima: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapSpec {
    pub n_resamples: usize,
    pub confidence: f64,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        let d = BootstrapConfig::default();
        Self {
            n_resamples: d.n_resamples,
            confidence: d.confidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputSource,
    #[serde(default)]
    pub cleaning: CleaningConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default = "default_lags")]
    pub lags: Vec<u32>,
    /// Lag whose displacements feed the velocity field; the smallest lag by default.
    #[serde(default)]
    pub velocity_lag: Option<u32>,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub bandwidths: Bandwidths,
    #[serde(default)]
    pub bootstrap: BootstrapSpec,
    #[serde(default)]
    pub pooling: Pooling,
    /// Also report the free-intercept fit of the velocity against `-∇H`.
    #[serde(default)]
    pub free_intercept: bool,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// Root seed of every stochastic step (bootstrap resamples).
    pub seed: u64,
    /// Worker thread cap; all cores when unset.
    #[serde(default)]
    pub jobs: Option<usize>,
}

fn default_lags() -> Vec<u32> {
    vec![1]
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl PipelineConfig {
    pub fn new(input: InputSource, seed: u64) -> Self {
        Self {
            input,
            cleaning: CleaningConfig::default(),
            metrics: MetricsConfig::default(),
            lags: default_lags(),
            velocity_lag: None,
            grid: Grid::default(),
            bandwidths: Bandwidths::default(),
            bootstrap: BootstrapSpec::default(),
            pooling: Pooling::default(),
            free_intercept: false,
            out_dir: default_out(),
            seed,
            jobs: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::validation(Stage::Config, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            stage: Stage::Config,
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn velocity_lag(&self) -> u32 {
        self.velocity_lag
            .unwrap_or_else(|| self.lags.iter().copied().min().unwrap_or(1))
    }

    pub fn bootstrap_config(&self) -> BootstrapConfig {
        BootstrapConfig {
            n_resamples: self.bootstrap.n_resamples,
            confidence: self.bootstrap.confidence,
            seed: self.seed,
        }
    }

    /// SHA-256 of the canonical JSON of everything that affects results
    /// (the output directory and thread cap are left out).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.jobs = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Checks every setting and that referenced input files exist.
    pub fn validate(&self) -> Result<(), PipelineError> {
        match &self.input {
            InputSource::Files { trade, gdp, .. } => {
                for (what, p) in [("trade", trade), ("gdp", gdp)] {
                    let p = p
                        .as_ref()
                        .ok_or_else(|| PipelineError::validation(Stage::Ingest, format!("{what} path missing")))?;
                    if !p.is_file() {
                        return Err(PipelineError::validation(
                            Stage::Ingest,
                            format!("{what} file {} does not exist", p.display()),
                        ));
                    }
                }
            }
            InputSource::Capability(m) => m.validate().map_err(|e| PipelineError::from_synth(Stage::Ingest, e))?,
            InputSource::Planted(_) => {}
        }
        self.cleaning
            .validate()
            .map_err(|e| PipelineError::from_ingest(Stage::Ingest, e))?;
        self.metrics
            .validate()
            .map_err(|e| PipelineError::from_metrics(Stage::Metrics, e))?;
        if self.lags.is_empty() || self.lags.contains(&0) {
            return Err(PipelineError::validation(
                Stage::Plane,
                "lags must be non-empty and positive",
            ));
        }
        if !self.lags.contains(&self.velocity_lag()) {
            return Err(PipelineError::validation(
                Stage::Fields,
                format!("velocity lag {} is not among the lags", self.velocity_lag()),
            ));
        }
        self.grid
            .validate()
            .map_err(|e| PipelineError::from_fields(Stage::Fields, e))?;
        for (what, b) in [("h", self.bandwidths.h), ("minima", self.bandwidths.minima)] {
            if !(b > 0.0 && b.is_finite()) {
                return Err(PipelineError::validation(
                    Stage::Fields,
                    format!("{what} bandwidth must be positive, got {b}"),
                ));
            }
        }
        let c = self.bootstrap.confidence;
        if !(c > 0.0 && c < 1.0) {
            return Err(PipelineError::validation(
                Stage::Fields,
                format!("confidence {c} outside (0, 1)"),
            ));
        }
        if self.jobs == Some(0) {
            return Err(PipelineError::validation(Stage::Config, "jobs must be at least 1"));
        }
        Ok(())
    }
}

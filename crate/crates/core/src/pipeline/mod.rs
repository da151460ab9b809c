//! End-to-end runs over file artifacts.
//!
//! Every stage reads what earlier stages wrote under the output directory and writes
//! its own artifacts next to them, so any stage can be rerun on its own.
//!
//! ```text
//! out/
//!   ingest/   trade.csv gdp.csv cleaning.json
//!   metrics/  metrics.csv diagnostics.json
//!   plane/    points.csv displacements.csv observables.csv coverage.json
//!   fields/   *.csv potential.json minima_*.json fields.json
//!   market/   histograms.csv profile.json
//!   report/   summary.json *.svg
//!   manifest.json
//! ```

mod config;
mod report;
mod stages;
mod svg;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::FieldsError;
use crate::ingest::IngestError;
use crate::market::MarketError;
use crate::metrics::MetricsError;
use crate::plane::PlaneError;
use crate::synth::SynthError;

pub use config::{Bandwidths, BootstrapSpec, InputSource, PipelineConfig};
pub use report::{render_report, ReportSummary};
pub use stages::{
    file_checksums, read_manifest, run_pipeline, run_stage, Manifest, StageRecord, StageStatus, MANIFEST_FILE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Ingest,
    Metrics,
    Plane,
    Fields,
    Market,
    Report,
}

impl Stage {
    pub const PIPELINE: [Stage; 5] = [
        Stage::Ingest,
        Stage::Metrics,
        Stage::Plane,
        Stage::Fields,
        Stage::Market,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Metrics => "metrics",
            Stage::Plane => "plane",
            Stage::Fields => "fields",
            Stage::Market => "market",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Data,
    NonConvergence,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Validation => 2,
            ErrorKind::Data => 3,
            ErrorKind::NonConvergence => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage}: invalid configuration: {message}")]
    Validation { stage: Stage, message: String },
    #[error("{stage}: {message}")]
    Data { stage: Stage, message: String },
    #[error("{stage}: {message}")]
    NotConverged { stage: Stage, message: String },
    #[error("{stage}: missing artifact {}", path.display())]
    MissingArtifact { stage: Stage, path: PathBuf },
    #[error("{stage}: {}: {source}", path.display())]
    Io {
        stage: Stage,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn stage(&self) -> Stage {
        match self {
            PipelineError::Validation { stage, .. }
            | PipelineError::Data { stage, .. }
            | PipelineError::NotConverged { stage, .. }
            | PipelineError::MissingArtifact { stage, .. }
            | PipelineError::Io { stage, .. } => *stage,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            PipelineError::Validation { .. } => ErrorKind::Validation,
            PipelineError::NotConverged { .. } => ErrorKind::NonConvergence,
            _ => ErrorKind::Data,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind().exit_code()
    }

    pub(crate) fn validation(stage: Stage, message: impl Into<String>) -> Self {
        PipelineError::Validation {
            stage,
            message: message.into(),
        }
    }

    pub(crate) fn data(stage: Stage, message: impl Into<String>) -> Self {
        PipelineError::Data {
            stage,
            message: message.into(),
        }
    }

    pub(crate) fn from_ingest(stage: Stage, e: IngestError) -> Self {
        match e {
            IngestError::InvalidConfig(m) => Self::validation(stage, m),
            other => Self::data(stage, other.to_string()),
        }
    }

    pub(crate) fn from_metrics(stage: Stage, e: MetricsError) -> Self {
        match e {
            MetricsError::InvalidConfig(m) => Self::validation(stage, m),
            e @ MetricsError::NotConverged { .. } => PipelineError::NotConverged {
                stage,
                message: e.to_string(),
            },
            other => Self::data(stage, other.to_string()),
        }
    }

    pub(crate) fn from_plane(stage: Stage, e: PlaneError) -> Self {
        match e {
            PlaneError::InvalidLags(m) => Self::validation(stage, format!("invalid lags: {m}")),
            other => Self::data(stage, other.to_string()),
        }
    }

    pub(crate) fn from_fields(stage: Stage, e: FieldsError) -> Self {
        match e {
            FieldsError::InvalidGrid(_) | FieldsError::InvalidBandwidth(_) | FieldsError::InvalidConfig(_) => {
                Self::validation(stage, e.to_string())
            }
            other => Self::data(stage, other.to_string()),
        }
    }

    pub(crate) fn from_market(stage: Stage, e: MarketError) -> Self {
        Self::data(stage, e.to_string())
    }

    pub(crate) fn from_synth(stage: Stage, e: SynthError) -> Self {
        match e {
            SynthError::InvalidModel(m) => Self::validation(stage, m),
            other => Self::data(stage, other.to_string()),
        }
    }
}

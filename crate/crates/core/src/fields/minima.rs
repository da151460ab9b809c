use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{gaussian_smooth_axes, FieldsError, GridField};
use crate::stats::quantile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnMinimum {
    pub column: usize,
    pub x: f64,
    pub y: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Bootstrap resamples in which this column had a minimum.
    pub resamples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaCurve {
    pub confidence: f64,
    /// One entry per grid column; `None` where the column has no populated cell.
    pub columns: Vec<Option<ColumnMinimum>>,
}

impl MinimaCurve {
    pub fn ys(&self) -> Vec<Option<f64>> {
        self.columns.iter().map(|c| c.map(|m| m.y)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n_resamples: 1000,
            confidence: 0.95,
            seed: 0,
        }
    }
}

/// Location in `[0, 1]` of the minimum of each column's profile after Gaussian
/// smoothing along y (`bandwidth` in cells).
///
/// The minimum is taken over populated cells and refined by the vertex of the parabola
/// through the minimal cell and its two neighbours when both are populated.
pub fn column_profile_minima(field: &GridField, bandwidth: f64) -> Vec<Option<f64>> {
    let g = field.grid;
    let smooth = gaussian_smooth_axes(field, 0.0, bandwidth);
    let ny = g.ny as f64;
    (0..g.nx)
        .map(|i| {
            let prof: Vec<Option<f64>> = (0..g.ny).map(|j| field.scalar(i, j).and(smooth.scalar(i, j))).collect();
            let (j, fj) = prof
                .iter()
                .enumerate()
                .filter_map(|(j, v)| v.map(|v| (j, v)))
                .min_by(|a, b| a.1.total_cmp(&b.1))?;
            let mut offset = 0.0;
            if j > 0 && j + 1 < g.ny {
                if let (Some(a), Some(b)) = (prof[j - 1], prof[j + 1]) {
                    let curv = a - 2.0 * fj + b;
                    if curv > 0.0 {
                        offset = ((a - b) / (2.0 * curv)).clamp(-0.5, 0.5);
                    }
                }
            }
            Some(((j as f64 + 0.5 + offset) / ny).clamp(0.0, 1.0))
        })
        .collect()
}

/// Column minima without resampling; the interval collapses onto the estimate.
pub fn column_minima(field: &GridField, bandwidth: f64) -> MinimaCurve {
    let g = field.grid;
    MinimaCurve {
        confidence: 0.0,
        columns: column_profile_minima(field, bandwidth)
            .into_iter()
            .enumerate()
            .map(|(i, y)| {
                y.map(|y| ColumnMinimum {
                    column: i,
                    x: g.center(i, 0).0,
                    y,
                    ci_low: y,
                    ci_high: y,
                    resamples: 0,
                })
            })
            .collect(),
    }
}

/// Column minima with percentile bootstrap intervals.
///
/// `build` turns a multiset of groups (typically whole product trajectories) into the
/// scalar field to analyse. The estimate uses every group once; each resample draws
/// `groups.len()` groups with replacement from its own deterministic stream of `cfg.seed`.
/// The interval is `[α/2, 1-α/2]` of the resampled minima, widened if needed so it
/// contains the estimate.
pub fn bootstrap_column_minima<G, F>(
    groups: &[G],
    build: F,
    bandwidth: f64,
    cfg: &BootstrapConfig,
) -> Result<MinimaCurve, FieldsError>
where
    G: Sync,
    F: Fn(&[&G]) -> Result<GridField, FieldsError> + Sync,
{
    if !(cfg.confidence > 0.0 && cfg.confidence < 1.0) {
        return Err(FieldsError::InvalidConfig(format!(
            "confidence {} outside (0, 1)",
            cfg.confidence
        )));
    }
    if groups.is_empty() {
        return Err(FieldsError::InvalidConfig("no groups to resample".into()));
    }
    let all: Vec<&G> = groups.iter().collect();
    let full = build(&all)?;
    let point = column_minima(&full, bandwidth);
    let draws: Vec<Vec<Option<f64>>> = (0..cfg.n_resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64 + 1);
            let pick: Vec<&G> = (0..groups.len())
                .map(|_| &groups[rng.random_range(0..groups.len())])
                .collect();
            build(&pick).map(|f| column_profile_minima(&f, bandwidth))
        })
        .collect::<Result<_, _>>()?;
    let alpha = 1.0 - cfg.confidence;
    let columns = point
        .columns
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            c.map(|mut m| {
                let mut ys: Vec<f64> = draws.iter().filter_map(|d| d[i]).collect();
                ys.sort_by(f64::total_cmp);
                m.resamples = ys.len();
                if !ys.is_empty() {
                    m.ci_low = quantile_sorted(&ys, alpha / 2.0).min(m.y);
                    m.ci_high = quantile_sorted(&ys, 1.0 - alpha / 2.0).max(m.y);
                }
                m
            })
        })
        .collect();
    Ok(MinimaCurve {
        confidence: cfg.confidence,
        columns,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveDistance {
    pub columns: usize,
    pub mean_abs: f64,
    pub max_abs: f64,
    /// Fraction of compared columns where the curves are at most `cell_height` apart.
    pub within_one_cell: f64,
}

/// Per-column vertical distance between two minima curves over columns present in both.
pub fn curve_distance(a: &MinimaCurve, b: &MinimaCurve, cell_height: f64) -> Option<CurveDistance> {
    let d: Vec<f64> = a
        .columns
        .iter()
        .zip(&b.columns)
        .filter_map(|(p, q)| Some((p.as_ref()?.y - q.as_ref()?.y).abs()))
        .collect();
    if d.is_empty() {
        return None;
    }
    Some(CurveDistance {
        columns: d.len(),
        mean_abs: d.iter().sum::<f64>() / d.len() as f64,
        max_abs: d.iter().copied().fold(0.0, f64::max),
        within_one_cell: d.iter().filter(|v| **v <= cell_height + 1e-12).count() as f64 / d.len() as f64,
    })
}

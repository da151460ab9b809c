use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use super::{FieldsError, GridField};

/// Per-axis slopes of `v ≈ -k ∘ ∇H` fitted through the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialFit {
    pub k_x: f64,
    pub k_y: f64,
    /// Uncentered R² of the through-origin model.
    pub r2_x: f64,
    pub r2_y: f64,
    pub cells_x: usize,
    pub cells_y: usize,
    /// Ordinary least squares with an intercept, reported for diagnostics only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub free: Option<[LineFit; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

fn paired(v: &GridField, grad_h: &GridField, k: usize) -> (Vec<f64>, Vec<f64>) {
    v.grid
        .cells()
        .filter_map(|(i, j)| Some((-grad_h.get(i, j, k)?, v.get(i, j, k)?)))
        .unzip()
}

fn through_origin(a: &[f64], b: &[f64]) -> Option<(f64, f64)> {
    let saa: f64 = a.iter().map(|x| x * x).sum();
    let sbb: f64 = b.iter().map(|x| x * x).sum();
    if saa <= 0.0 {
        return None;
    }
    let k = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / saa;
    let sse: f64 = a.iter().zip(b).map(|(x, y)| (y - k * x).powi(2)).sum();
    let r2 = if sbb > 0.0 { 1.0 - sse / sbb } else { 1.0 };
    Some((k, r2))
}

fn with_intercept(a: &[f64], b: &[f64]) -> Option<LineFit> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let saa: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    if saa <= 0.0 {
        return None;
    }
    let sab: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let sbb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    let slope = sab / saa;
    let intercept = mb - slope * ma;
    let sse: f64 = a.iter().zip(b).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Some(LineFit {
        slope,
        intercept,
        r2: if sbb > 0.0 { 1.0 - sse / sbb } else { 1.0 },
    })
}

/// Least-squares fit of each velocity component against the matching component of
/// `-∇H` over cells where both are defined, with no intercept.
pub fn fit_potential(v: &GridField, grad_h: &GridField) -> Result<PotentialFit, FieldsError> {
    fit(v, grad_h, false)
}

/// As [`fit_potential`], additionally reporting the free-intercept fit per axis.
pub fn fit_potential_with_intercept(v: &GridField, grad_h: &GridField) -> Result<PotentialFit, FieldsError> {
    fit(v, grad_h, true)
}

fn fit(v: &GridField, grad_h: &GridField, free: bool) -> Result<PotentialFit, FieldsError> {
    if v.grid != grad_h.grid || v.dim != 2 || grad_h.dim != 2 {
        return Err(FieldsError::DimensionMismatch {
            expected: 2,
            got: v.dim.min(grad_h.dim),
        });
    }
    let mut ks = [0.0; 2];
    let mut r2 = [0.0; 2];
    let mut cells = [0; 2];
    let mut lines = [LineFit {
        slope: f64::NAN,
        intercept: f64::NAN,
        r2: f64::NAN,
    }; 2];
    for axis in 0..2 {
        let (a, b) = paired(v, grad_h, axis);
        let short = || FieldsError::InsufficientOverlap { axis, cells: a.len() };
        if a.len() < 3 {
            return Err(short());
        }
        (ks[axis], r2[axis]) = through_origin(&a, &b).ok_or_else(short)?;
        cells[axis] = a.len();
        if free {
            lines[axis] = with_intercept(&a, &b).ok_or_else(short)?;
        }
    }
    Ok(PotentialFit {
        k_x: ks[0],
        k_y: ks[1],
        r2_x: r2[0],
        r2_y: r2[1],
        cells_x: cells[0],
        cells_y: cells[1],
        free: free.then_some(lines),
    })
}

/// Sign test on the cosine between `v` and `-∇H` over co-populated cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionTest {
    pub mean_cosine: f64,
    pub positive: usize,
    pub cells: usize,
    /// One-sided p-value of `P(cos > 0) > 1/2`.
    pub p_value: f64,
}

pub fn direction_agreement(v: &GridField, grad_h: &GridField) -> Option<DirectionTest> {
    let mut cosines = Vec::new();
    for (i, j) in v.grid.cells() {
        let (Some(vx), Some(vy), Some(gx), Some(gy)) =
            (v.get(i, j, 0), v.get(i, j, 1), grad_h.get(i, j, 0), grad_h.get(i, j, 1))
        else {
            continue;
        };
        let (nv, ng) = (vx.hypot(vy), gx.hypot(gy));
        if nv > 0.0 && ng > 0.0 {
            cosines.push(-(vx * gx + vy * gy) / (nv * ng));
        }
    }
    if cosines.is_empty() {
        return None;
    }
    let n = cosines.len() as u64;
    let positive = cosines.iter().filter(|c| **c > 0.0).count();
    let p_value = if positive == 0 {
        1.0
    } else {
        Binomial::new(0.5, n).ok()?.sf(positive as u64 - 1)
    };
    Some(DirectionTest {
        mean_cosine: cosines.iter().sum::<f64>() / n as f64,
        positive,
        cells: cosines.len(),
        p_value,
    })
}

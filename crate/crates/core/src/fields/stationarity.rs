use serde::{Deserialize, Serialize};

use super::{box_average, FieldsError, Grid, GridField, Sample};
use crate::plane::{Displacement, PlanePoint};
use crate::stats::linear_trend;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stationarity {
    /// Mean velocity of displacements grouped by the cell they arrive in.
    pub inward: GridField,
    /// Mean number of points per year in each cell.
    pub density: GridField,
    /// Least-squares slope of yearly counts against year, divided by the mean count.
    /// Defined where the mean count reaches `grid.min_count`.
    pub density_change: GridField,
    /// Two-sided p-value of the slope being zero, on the same cells as `density_change`.
    pub density_change_p: GridField,
}

pub fn stationarity_diagnostics(
    points: &[(i32, Vec<PlanePoint>)],
    displacements: &[Displacement],
    grid: &Grid,
) -> Result<Stationarity, FieldsError> {
    grid.validate()?;
    if points.len() < 2 {
        return Err(FieldsError::InvalidConfig(format!(
            "need at least 2 years of points, got {}",
            points.len()
        )));
    }
    let arrivals: Vec<Sample> = displacements
        .iter()
        .map(|d| {
            let (x, y) = d.end();
            let lag = d.lag as f64;
            Sample::vector(x.clamp(0.0, 1.0), y.clamp(0.0, 1.0), d.dx / lag, d.dy / lag)
        })
        .collect();
    let inward = if arrivals.is_empty() {
        GridField::empty(*grid, 2)
    } else {
        box_average(&arrivals, grid)?
    };

    let n = grid.n_cells();
    let mut yearly = vec![vec![0.0; points.len()]; n];
    for (t, (_, pts)) in points.iter().enumerate() {
        for (k, p) in pts.iter().enumerate() {
            let (i, j) = grid.cell(p.x, p.y).ok_or(FieldsError::OutOfDomain {
                index: k,
                x: p.x,
                y: p.y,
            })?;
            yearly[grid.index(i, j)][t] += 1.0;
        }
    }
    let years: Vec<f64> = points.iter().map(|(y, _)| *y as f64).collect();
    let mut density = GridField::empty(*grid, 1);
    let mut change = GridField::empty(*grid, 1);
    let mut change_p = GridField::empty(*grid, 1);
    for (i, j) in grid.cells() {
        let c = grid.index(i, j);
        let total: f64 = yearly[c].iter().sum();
        let mean = total / points.len() as f64;
        density.counts[c] = total as usize;
        change.counts[c] = total as usize;
        change_p.counts[c] = total as usize;
        if total > 0.0 {
            density.set(i, j, 0, Some(mean));
        }
        if mean >= grid.min_count.max(1) as f64 {
            if let Some(fit) = linear_trend(&years, &yearly[c]) {
                change.set(i, j, 0, Some(fit.slope / mean));
                change_p.set(i, j, 0, Some(fit.p_value));
            }
        }
    }
    Ok(Stationarity {
        inward,
        density,
        density_change: change,
        density_change_p: change_p,
    })
}

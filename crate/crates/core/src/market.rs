//! Market shape per plane cell: mean normalized RCA of countries grouped by Fitness decile.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{Grid, MinimaCurve};
use crate::plane::PlanePoint;
use crate::stats::{average_ranks, spearman};

pub const N_BINS: usize = 10;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("need at least 10 countries with a Fitness value, got {0}")]
    TooFewCountries(usize),
    #[error("no weights or deciles for year {0}")]
    MissingYear(i32),
    #[error("column {0} has no minimum or no histogram at its minimum")]
    MissingColumn(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Decile membership of countries by Fitness within one year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deciles {
    /// Interior edges between consecutive deciles.
    pub edges: Vec<f64>,
    /// Decile index `0..10` per country; `None` where Fitness is missing.
    pub assignment: Vec<Option<usize>>,
    pub occupancy: [usize; N_BINS],
    /// True when ties leave some decile empty.
    pub degenerate: bool,
}

/// Splits countries into ten Fitness groups of `N/10 ± 1` members.
///
/// A country with average rank `r` among `N` goes to decile `⌊10 (r - ½) / N⌋`, so tied
/// countries always share a decile. Edge `k` is the interpolated order statistic at
/// rank position `k N / 10 + ½`.
pub fn fitness_deciles(fitness: &[Option<f64>]) -> Result<Deciles, MarketError> {
    let present: Vec<(usize, f64)> = fitness
        .iter()
        .enumerate()
        .filter_map(|(c, f)| f.map(|v| (c, v)))
        .collect();
    let n = present.len();
    if n < N_BINS {
        return Err(MarketError::TooFewCountries(n));
    }
    let vals: Vec<f64> = present.iter().map(|p| p.1).collect();
    let ranks = average_ranks(&vals);
    let mut assignment = vec![None; fitness.len()];
    let mut occupancy = [0; N_BINS];
    for ((c, _), r) in present.iter().zip(&ranks) {
        let bin = ((N_BINS as f64 * (r - 0.5) / n as f64).floor() as usize).min(N_BINS - 1);
        assignment[*c] = Some(bin);
        occupancy[bin] += 1;
    }
    let mut sorted = vals.clone();
    sorted.sort_by(f64::total_cmp);
    let edges = (1..N_BINS)
        .map(|k| {
            let pos = k as f64 * n as f64 / N_BINS as f64 + 0.5;
            let lo = (pos.floor() as usize).clamp(1, n);
            let hi = (lo + 1).min(n);
            let frac = pos - lo as f64;
            sorted[lo - 1] + frac * (sorted[hi - 1] - sorted[lo - 1])
        })
        .collect();
    Ok(Deciles {
        edges,
        assignment,
        degenerate: occupancy.contains(&0),
        occupancy,
    })
}

/// Inputs for one year: normalized RCA weights `W[c,p]` and Fitness deciles.
#[derive(Debug, Clone)]
pub struct MarketYear {
    pub year: i32,
    pub weights: Array2<f64>,
    pub deciles: Deciles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketHistogram {
    pub cell: (usize, usize),
    /// `None` when years are pooled.
    pub year: Option<i32>,
    pub values: [Option<f64>; N_BINS],
    /// Number of (product, year, country) triples behind each bin.
    pub support: [usize; N_BINS],
}

impl MarketHistogram {
    /// `(max - mean) / mean` over populated bins: 0 for a flat profile, 9 for a single spike.
    pub fn peakedness(&self) -> Option<f64> {
        let v: Vec<f64> = self.values.iter().flatten().copied().collect();
        if v.is_empty() {
            return None;
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (mean > 0.0).then(|| (max - mean) / mean)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Pooled,
    PerYear,
}

#[derive(Default, Clone)]
struct Acc {
    sum: [f64; N_BINS],
    support: [usize; N_BINS],
}

impl Acc {
    fn finish(&self, cell: (usize, usize), year: Option<i32>) -> MarketHistogram {
        let mut values = [None; N_BINS];
        for b in 0..N_BINS {
            if self.support[b] > 0 {
                values[b] = Some(self.sum[b] / self.support[b] as f64);
            }
        }
        MarketHistogram {
            cell,
            year,
            values,
            support: self.support,
        }
    }
}

/// For each cell holding at least one point, bin `b` is the mean of `W[c,p]` over every
/// (product-in-cell, year, country-in-decile-`b`) triple. Countries that do not export
/// the product contribute zeros. Cells are returned in grid order (per year when
/// `pooling` is [`Pooling::PerYear`]).
pub fn box_market_histograms(
    points: &[(i32, Vec<PlanePoint>)],
    years: &[MarketYear],
    grid: &Grid,
    pooling: Pooling,
) -> Result<Vec<MarketHistogram>, MarketError> {
    let mut pooled = vec![Acc::default(); grid.n_cells()];
    let mut out = Vec::new();
    for (year, pts) in points {
        let my = years
            .iter()
            .find(|m| m.year == *year)
            .ok_or(MarketError::MissingYear(*year))?;
        let mut acc = vec![Acc::default(); grid.n_cells()];
        for p in pts {
            let Some((i, j)) = grid.cell(p.x, p.y) else {
                continue;
            };
            let a = &mut acc[grid.index(i, j)];
            for (c, d) in my.deciles.assignment.iter().enumerate() {
                if let Some(b) = d {
                    a.sum[*b] += my.weights[[c, p.product]];
                    a.support[*b] += 1;
                }
            }
        }
        match pooling {
            Pooling::PerYear => {
                for (i, j) in grid.cells() {
                    let a = &acc[grid.index(i, j)];
                    if a.support.iter().any(|&s| s > 0) {
                        out.push(a.finish((i, j), Some(*year)));
                    }
                }
            }
            Pooling::Pooled => {
                for (dst, src) in pooled.iter_mut().zip(&acc) {
                    for b in 0..N_BINS {
                        dst.sum[b] += src.sum[b];
                        dst.support[b] += src.support[b];
                    }
                }
            }
        }
    }
    if pooling == Pooling::Pooled {
        for (i, j) in grid.cells() {
            let a = &pooled[grid.index(i, j)];
            if a.support.iter().any(|&s| s > 0) {
                out.push(a.finish((i, j), None));
            }
        }
    }
    Ok(out)
}

/// CSV `cell_x,cell_y,decile,value,support` (plus a leading `year` column for per-year
/// histograms); deciles are numbered 1 to 10 and missing bins have an empty value.
pub fn write_histograms_csv<W: Write>(hist: &[MarketHistogram], writer: W) -> Result<(), MarketError> {
    let mut w = csv::Writer::from_writer(writer);
    let per_year = hist.iter().any(|h| h.year.is_some());
    let mut header = vec!["cell_x", "cell_y", "decile", "value", "support"];
    if per_year {
        header.insert(0, "year");
    }
    w.write_record(&header)?;
    for h in hist {
        for b in 0..N_BINS {
            let mut rec = vec![
                h.cell.0.to_string(),
                h.cell.1.to_string(),
                (b + 1).to_string(),
                h.values[b].map(|v| v.to_string()).unwrap_or_default(),
                h.support[b].to_string(),
            ];
            if per_year {
                rec.insert(0, h.year.map(|y| y.to_string()).unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnProfile {
    pub column: usize,
    /// Row of the cell containing the column's minimum.
    pub row: usize,
    pub histogram: MarketHistogram,
    pub peakedness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticProfile {
    pub columns: Vec<Option<ColumnProfile>>,
}

impl AsymptoticProfile {
    pub fn require(&self, column: usize) -> Result<&ColumnProfile, MarketError> {
        self.columns
            .get(column)
            .and_then(Option::as_ref)
            .ok_or(MarketError::MissingColumn(column))
    }

    /// Spearman correlation between column index and peakedness along the curve.
    pub fn trend(&self) -> Option<f64> {
        let (i, p): (Vec<f64>, Vec<f64>) = self
            .columns
            .iter()
            .flatten()
            .filter_map(|c| Some((c.column as f64, c.peakedness?)))
            .unzip();
        spearman(&i, &p)
    }
}

/// Picks, in every column, the pooled histogram of the cell holding the minima curve.
pub fn asymptotic_profile(hist: &[MarketHistogram], minima: &MinimaCurve, grid: &Grid) -> AsymptoticProfile {
    let columns = minima
        .columns
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let m = m.as_ref()?;
            let (_, row) = grid.cell(grid.center(i, 0).0, m.y)?;
            let h = hist.iter().find(|h| h.cell == (i, row) && h.year.is_none())?;
            Some(ColumnProfile {
                column: i,
                row,
                peakedness: h.peakedness(),
                histogram: h.clone(),
            })
        })
        .collect();
    AsymptoticProfile { columns }
}

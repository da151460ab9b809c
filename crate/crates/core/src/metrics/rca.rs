use ndarray::{Array2, Axis};
use serde::Serialize;

use super::MetricsError;
use crate::ingest::TradePanel;

/// Balassa index `R[c,p]` and its per-product normalization `W[c,p] = R[c,p] / Σ_c R[c,p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RcaMatrix {
    pub year: i32,
    pub rca: Array2<f64>,
    pub weights: Array2<f64>,
}

impl RcaMatrix {
    pub fn from_exports(year: i32, exports: &Array2<f64>) -> Result<Self, MetricsError> {
        let world: f64 = exports.sum();
        if !(world > 0.0) {
            return Err(MetricsError::ZeroWorldExport(year));
        }
        let row_tot = exports.sum_axis(Axis(1));
        let col_tot = exports.sum_axis(Axis(0));
        let mut rca = Array2::zeros(exports.raw_dim());
        for ((c, p), e) in exports.indexed_iter() {
            if row_tot[c] > 0.0 && col_tot[p] > 0.0 {
                rca[[c, p]] = (e / row_tot[c]) / (col_tot[p] / world);
            }
        }
        let rca_col = rca.sum_axis(Axis(0));
        let mut weights = Array2::zeros(rca.raw_dim());
        for ((c, p), r) in rca.indexed_iter() {
            if rca_col[p] > 0.0 {
                weights[[c, p]] = r / rca_col[p];
            }
        }
        Ok(Self { year, rca, weights })
    }

    pub fn n_countries(&self) -> usize {
        self.rca.nrows()
    }

    pub fn n_products(&self) -> usize {
        self.rca.ncols()
    }
}

/// RCA for one panel year.
pub fn rca(panel: &TradePanel, year: i32) -> Result<RcaMatrix, MetricsError> {
    let m = panel.matrix(year).ok_or(MetricsError::UnknownYear(year))?;
    RcaMatrix::from_exports(year, m)
}

/// Binary export matrix `M[c,p] = 1` iff `R[c,p] ≥ threshold`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    pub cells: Array2<bool>,
}

impl BinaryMatrix {
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        Self {
            cells: Array2::from_shape_fn((rows, cols), |(r, c)| f(r, c)),
        }
    }

    pub fn from_rows(rows: &[&[u8]]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        Self::from_fn(n, m, |r, c| rows[r][c] != 0)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.cells.dim()
    }

    pub fn get(&self, c: usize, p: usize) -> bool {
        self.cells[[c, p]]
    }

    pub fn row_degrees(&self) -> Vec<usize> {
        self.cells
            .rows()
            .into_iter()
            .map(|r| r.iter().filter(|&&b| b).count())
            .collect()
    }

    pub fn col_degrees(&self) -> Vec<usize> {
        self.cells
            .columns()
            .into_iter()
            .map(|r| r.iter().filter(|&&b| b).count())
            .collect()
    }

    pub fn degeneracy(&self) -> Degeneracy {
        Degeneracy {
            empty_rows: self
                .row_degrees()
                .iter()
                .enumerate()
                .filter(|(_, d)| **d == 0)
                .map(|(i, _)| i)
                .collect(),
            empty_cols: self
                .col_degrees()
                .iter()
                .enumerate()
                .filter(|(_, d)| **d == 0)
                .map(|(i, _)| i)
                .collect(),
        }
    }
}

/// All-zero rows (countries) and columns (products) of a binary matrix.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Degeneracy {
    pub empty_rows: Vec<usize>,
    pub empty_cols: Vec<usize>,
}

impl Degeneracy {
    pub fn is_clean(&self) -> bool {
        self.empty_rows.is_empty() && self.empty_cols.is_empty()
    }
}

pub fn binarize(rca: &RcaMatrix, threshold: f64) -> (BinaryMatrix, Degeneracy) {
    let m = BinaryMatrix {
        cells: rca.rca.mapv(|r| r >= threshold),
    };
    let report = m.degeneracy();
    (m, report)
}

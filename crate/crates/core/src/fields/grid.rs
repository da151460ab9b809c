use std::io::Write;

use serde::{Deserialize, Serialize};

use super::FieldsError;

/// Regular grid over the unit square. Cell `(i, j)` covers `x ∈ [i/nx, (i+1)/nx)` and
/// `y ∈ [j/ny, (j+1)/ny)`; the upper edge 1 belongs to the last cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub min_count: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            nx: 10,
            ny: 10,
            min_count: 5,
        }
    }
}

fn axis_cell(coord: f64, n: usize) -> Option<usize> {
    if !(0.0..=1.0).contains(&coord) {
        return None;
    }
    Some(((coord * n as f64).floor() as usize).min(n - 1))
}

impl Grid {
    pub fn new(nx: usize, ny: usize, min_count: usize) -> Result<Self, FieldsError> {
        let g = Self { nx, ny, min_count };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), FieldsError> {
        if self.nx < 2 || self.ny < 2 {
            return Err(FieldsError::InvalidGrid(format!(
                "need at least 2x2 cells, got {}x{}",
                self.nx, self.ny
            )));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    pub fn cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        Some((axis_cell(x, self.nx)?, axis_cell(y, self.ny)?))
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) / self.nx as f64, (j as f64 + 0.5) / self.ny as f64)
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.nx).flat_map(move |i| (0..self.ny).map(move |j| (i, j)))
    }
}

/// A point of the plane carrying a scalar or vector payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: f64,
    pub y: f64,
    pub value: Vec<f64>,
}

impl Sample {
    pub fn scalar(x: f64, y: f64, v: f64) -> Self {
        Self { x, y, value: vec![v] }
    }

    pub fn vector(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        Self {
            x,
            y,
            value: vec![vx, vy],
        }
    }
}

/// Per-cell values with `dim` components each. A component may be missing on its own
/// (e.g. a one-sided derivative with no neighbour); a cell is populated when any
/// component is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub grid: Grid,
    pub dim: usize,
    /// `n_cells * dim` entries, cell-major in [`Grid::index`] order.
    pub values: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

impl GridField {
    pub fn empty(grid: Grid, dim: usize) -> Self {
        Self {
            grid,
            dim,
            values: vec![None; grid.n_cells() * dim],
            counts: vec![0; grid.n_cells()],
        }
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Option<f64> {
        self.values[self.grid.index(i, j) * self.dim + k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: Option<f64>) {
        let idx = self.grid.index(i, j) * self.dim + k;
        self.values[idx] = v;
    }

    pub fn scalar(&self, i: usize, j: usize) -> Option<f64> {
        self.get(i, j, 0)
    }

    pub fn count(&self, i: usize, j: usize) -> usize {
        self.counts[self.grid.index(i, j)]
    }

    pub fn is_populated(&self, i: usize, j: usize) -> bool {
        (0..self.dim).any(|k| self.get(i, j, k).is_some())
    }

    pub fn populated_cells(&self) -> usize {
        self.grid.cells().filter(|&(i, j)| self.is_populated(i, j)).count()
    }

    /// One component as a scalar field.
    pub fn component(&self, k: usize) -> GridField {
        let mut out = GridField::empty(self.grid, 1);
        out.counts = self.counts.clone();
        for (i, j) in self.grid.cells() {
            out.set(i, j, 0, self.get(i, j, k));
        }
        out
    }

    /// Euclidean norm of the cell vector; missing if any component is missing.
    pub fn modulus(&self) -> GridField {
        let mut out = GridField::empty(self.grid, 1);
        out.counts = self.counts.clone();
        for (i, j) in self.grid.cells() {
            let comps: Option<Vec<f64>> = (0..self.dim).map(|k| self.get(i, j, k)).collect();
            out.set(i, j, 0, comps.map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()));
        }
        out
    }

    pub fn defined_values(&self, k: usize) -> Vec<f64> {
        self.grid.cells().filter_map(|(i, j)| self.get(i, j, k)).collect()
    }

    /// CSV `cell_x,cell_y,count,value...`; missing components are empty fields.
    pub fn write_csv<W: Write>(&self, writer: W, value_names: &[&str]) -> Result<(), FieldsError> {
        assert_eq!(value_names.len(), self.dim);
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["cell_x", "cell_y", "count"];
        header.extend_from_slice(value_names);
        w.write_record(&header)?;
        for (i, j) in self.grid.cells() {
            let mut rec = vec![i.to_string(), j.to_string(), self.count(i, j).to_string()];
            for k in 0..self.dim {
                rec.push(self.get(i, j, k).map(|v| v.to_string()).unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Arithmetic mean of the payloads falling in each cell. Cells with fewer than
/// `grid.min_count` samples keep their count but carry no value.
pub fn box_average(samples: &[Sample], grid: &Grid) -> Result<GridField, FieldsError> {
    grid.validate()?;
    let dim = samples.first().map_or(1, |s| s.value.len());
    let mut sums = vec![0.0; grid.n_cells() * dim];
    let mut field = GridField::empty(*grid, dim);
    for (n, s) in samples.iter().enumerate() {
        let (i, j) = grid.cell(s.x, s.y).ok_or(FieldsError::OutOfDomain {
            index: n,
            x: s.x,
            y: s.y,
        })?;
        if s.value.len() != dim {
            return Err(FieldsError::DimensionMismatch {
                expected: dim,
                got: s.value.len(),
            });
        }
        let c = grid.index(i, j);
        field.counts[c] += 1;
        for (k, v) in s.value.iter().enumerate() {
            sums[c * dim + k] += v;
        }
    }
    for c in 0..grid.n_cells() {
        let n = field.counts[c];
        if n > 0 && n >= grid.min_count {
            for k in 0..dim {
                field.values[c * dim + k] = Some(sums[c * dim + k] / n as f64);
            }
        }
    }
    Ok(field)
}

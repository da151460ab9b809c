use super::{FieldsError, Grid, GridField, Sample};

/// Gaussian weights for integer offsets `-r..=r` with `r = ⌊3h⌋`; `h = 0` keeps only offset 0.
fn kernel_1d(h: f64) -> Vec<(isize, f64)> {
    if h <= 0.0 {
        return vec![(0, 1.0)];
    }
    let r = (3.0 * h).floor() as isize;
    (-r..=r).map(|d| (d, (-(d * d) as f64 / (2.0 * h * h)).exp())).collect()
}

/// Isotropic Gaussian smoothing; `bandwidth` in cell units.
pub fn gaussian_smooth(field: &GridField, bandwidth: f64) -> GridField {
    gaussian_smooth_axes(field, bandwidth, bandwidth)
}

/// Gaussian smoothing with separate bandwidths along x and y (cell units), truncated at
/// three bandwidths. Each output cell is the kernel-weighted mean over populated input
/// cells only, so empty cells add no mass and boundaries are not attenuated. Cells out
/// of reach of every populated cell stay empty. Counts are carried through.
pub fn gaussian_smooth_axes(field: &GridField, hx: f64, hy: f64) -> GridField {
    let g = field.grid;
    let (kx, ky) = (kernel_1d(hx), kernel_1d(hy));
    let mut out = GridField::empty(g, field.dim);
    out.counts = field.counts.clone();
    for (i, j) in g.cells() {
        for k in 0..field.dim {
            let mut num = 0.0;
            let mut den = 0.0;
            for &(di, wx) in &kx {
                let ii = i as isize + di;
                if ii < 0 || ii >= g.nx as isize {
                    continue;
                }
                for &(dj, wy) in &ky {
                    let jj = j as isize + dj;
                    if jj < 0 || jj >= g.ny as isize {
                        continue;
                    }
                    if let Some(v) = field.get(ii as usize, jj as usize, k) {
                        let w = wx * wy;
                        num += w * v;
                        den += w;
                    }
                }
            }
            if den > 0.0 {
                out.set(i, j, k, Some(num / den));
            }
        }
    }
    out
}

/// Nadaraya–Watson regression evaluated at cell centres with a Gaussian kernel of
/// `bandwidth` in plane units. Samples beyond three bandwidths are ignored; the cell
/// count is the number of samples within that cutoff and cells with none stay empty.
pub fn nadaraya_watson(samples: &[Sample], bandwidth: f64, eval_grid: &Grid) -> Result<GridField, FieldsError> {
    eval_grid.validate()?;
    if !(bandwidth > 0.0) {
        return Err(FieldsError::InvalidBandwidth(bandwidth));
    }
    let dim = samples.first().map_or(1, |s| s.value.len());
    let cutoff2 = (3.0 * bandwidth).powi(2);
    let mut out = GridField::empty(*eval_grid, dim);
    for (i, j) in eval_grid.cells() {
        let (cx, cy) = eval_grid.center(i, j);
        let mut num = vec![0.0; dim];
        let mut den = 0.0;
        let mut n = 0;
        for s in samples {
            let d2 = (s.x - cx).powi(2) + (s.y - cy).powi(2);
            if d2 > cutoff2 {
                continue;
            }
            let w = (-d2 / (2.0 * bandwidth * bandwidth)).exp();
            for (acc, v) in num.iter_mut().zip(&s.value) {
                *acc += w * v;
            }
            den += w;
            n += 1;
        }
        out.counts[eval_grid.index(i, j)] = n;
        if n > 0 {
            for (k, v) in num.iter().enumerate() {
                out.set(i, j, k, Some(v / den));
            }
        }
    }
    Ok(out)
}

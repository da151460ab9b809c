use super::GridField;

fn derivative(prev: Option<f64>, here: f64, next: Option<f64>, h: f64) -> Option<f64> {
    match (prev, next) {
        (Some(a), Some(b)) => Some((b - a) / (2.0 * h)),
        (None, Some(b)) => Some((b - here) / h),
        (Some(a), None) => Some((here - a) / h),
        (None, None) => None,
    }
}

/// Finite-difference gradient of a scalar field in plane units (spacing `1/nx`, `1/ny`).
///
/// Central differences where both neighbours are populated, one-sided next to a
/// boundary or hole; a component with no populated neighbour on its axis is missing.
pub fn gradient(field: &GridField) -> GridField {
    let g = field.grid;
    let (hx, hy) = (1.0 / g.nx as f64, 1.0 / g.ny as f64);
    let mut out = GridField::empty(g, 2);
    out.counts = field.counts.clone();
    let at = |i: isize, j: isize| -> Option<f64> {
        if i < 0 || j < 0 || i >= g.nx as isize || j >= g.ny as isize {
            None
        } else {
            field.scalar(i as usize, j as usize)
        }
    };
    for (i, j) in g.cells() {
        let Some(here) = field.scalar(i, j) else {
            continue;
        };
        let (ii, jj) = (i as isize, j as isize);
        out.set(i, j, 0, derivative(at(ii - 1, jj), here, at(ii + 1, jj), hx));
        out.set(i, j, 1, derivative(at(ii, jj - 1), here, at(ii, jj + 1), hy));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;

    fn sampled(g: Grid, f: impl Fn(f64, f64) -> f64) -> GridField {
        let mut out = GridField::empty(g, 1);
        for (i, j) in g.cells() {
            let (x, y) = g.center(i, j);
            out.set(i, j, 0, Some(f(x, y)));
        }
        out
    }

    #[test]
    fn constant_field_has_zero_gradient() {
        let g = Grid::new(5, 4, 1).unwrap();
        let d = gradient(&sampled(g, |_, _| 3.0));
        assert!(d.values.iter().all(|v| *v == Some(0.0)));
    }

    #[test]
    fn linear_field_exact() {
        let g = Grid::new(8, 8, 1).unwrap();
        let d = gradient(&sampled(g, |x, _| x));
        for (i, j) in g.cells() {
            assert!((d.get(i, j, 0).unwrap() - 1.0).abs() < 1e-12);
            assert_eq!(d.get(i, j, 1), Some(0.0));
        }
    }

    #[test]
    fn quadratic_central_difference_is_exact() {
        let g = Grid::new(10, 3, 1).unwrap();
        let d = gradient(&sampled(g, |x, _| x * x));
        for i in 1..9 {
            let (x, _) = g.center(i, 1);
            assert!((d.get(i, 1, 0).unwrap() - 2.0 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_cell_has_missing_components() {
        let g = Grid::new(3, 3, 1).unwrap();
        let mut f = GridField::empty(g, 1);
        f.set(1, 1, 0, Some(1.0));
        f.set(2, 1, 0, Some(3.0));
        let d = gradient(&f);
        assert_eq!(d.get(1, 1, 0), Some(6.0));
        assert_eq!(d.get(1, 1, 1), None);
        assert_eq!(d.get(2, 1, 0), Some(6.0));
        assert!(!d.is_populated(0, 0));
    }
}

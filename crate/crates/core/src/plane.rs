//! The ranked Complexity–logPRODY plane: yearly tied ranks, points and displacements.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricPanel;
use crate::stats::average_ranks;

#[derive(Debug, Error)]
pub enum PlaneError {
    #[error("need at least 2 non-missing values to rank, got {0}")]
    TooFewValues(usize),
    #[error("no product is present at both ends of any requested lag")]
    NoOverlap,
    #[error("invalid lag set: {0}")]
    InvalidLags(String),
    #[error("malformed plane file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Average ranks of the non-missing values, mapped linearly so the lowest rank is 0 and
/// the highest is 1. A fully tied input maps to 0.5 everywhere.
pub fn tied_rank(values: &[Option<f64>]) -> Result<Vec<Option<f64>>, PlaneError> {
    let present: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.filter(|x| !x.is_nan()).map(|x| (i, x)))
        .collect();
    if present.len() < 2 {
        return Err(PlaneError::TooFewValues(present.len()));
    }
    let vals: Vec<f64> = present.iter().map(|p| p.1).collect();
    let ranks = average_ranks(&vals);
    let lo = ranks.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ranks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = vec![None; values.len()];
    for ((i, _), r) in present.iter().zip(ranks) {
        out[*i] = Some(if hi > lo { (r - lo) / (hi - lo) } else { 0.5 });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanePoint {
    /// Index into the product registry.
    pub product: usize,
    pub year: i32,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Displacement {
    pub start: PlanePoint,
    pub lag: u32,
    pub dx: f64,
    pub dy: f64,
}

impl Displacement {
    pub fn end(&self) -> (f64, f64) {
        (self.start.x + self.dx, self.start.y + self.dy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagCoverage {
    pub lag: u32,
    /// Year pairs `(t, t + lag)` available in the panel.
    pub year_pairs: usize,
    pub displacements: usize,
    /// Product-year starts dropped because the product is missing at `t + lag`.
    pub excluded: usize,
}

/// Points per year and displacements per lag over a product registry.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneData {
    pub products: Vec<String>,
    /// `(year, points)` in increasing year order.
    pub points: Vec<(i32, Vec<PlanePoint>)>,
    pub displacements: BTreeMap<u32, Vec<Displacement>>,
    pub coverage: Vec<LagCoverage>,
}

fn validate_lags(lags: &[u32]) -> Result<(), PlaneError> {
    if lags.is_empty() {
        return Err(PlaneError::InvalidLags("empty".into()));
    }
    if lags.contains(&0) {
        return Err(PlaneError::InvalidLags("lag 0".into()));
    }
    Ok(())
}

impl PlaneData {
    /// Builds displacements from points already placed on the plane. Lags that no
    /// product survives get an empty list.
    pub fn from_points(
        products: Vec<String>,
        mut points: Vec<(i32, Vec<PlanePoint>)>,
        lags: &[u32],
    ) -> Result<Self, PlaneError> {
        validate_lags(lags)?;
        points.sort_by_key(|(y, _)| *y);
        let by_year: HashMap<i32, HashMap<usize, &PlanePoint>> = points
            .iter()
            .map(|(y, pts)| (*y, pts.iter().map(|p| (p.product, p)).collect()))
            .collect();
        let mut lag_list: Vec<u32> = lags.to_vec();
        lag_list.sort_unstable();
        lag_list.dedup();
        let mut displacements = BTreeMap::new();
        let mut coverage = Vec::new();
        for &lag in &lag_list {
            let mut out = Vec::new();
            let mut pairs = 0;
            let mut excluded = 0;
            for (year, pts) in &points {
                let Some(later) = by_year.get(&(year + lag as i32)) else {
                    continue;
                };
                pairs += 1;
                for p in pts {
                    match later.get(&p.product) {
                        Some(q) => out.push(Displacement {
                            start: *p,
                            lag,
                            dx: q.x - p.x,
                            dy: q.y - p.y,
                        }),
                        None => excluded += 1,
                    }
                }
            }
            coverage.push(LagCoverage {
                lag,
                year_pairs: pairs,
                displacements: out.len(),
                excluded,
            });
            displacements.insert(lag, out);
        }
        Ok(Self {
            products,
            points,
            displacements,
            coverage,
        })
    }

    pub fn has_displacements(&self) -> bool {
        self.displacements.values().any(|d| !d.is_empty())
    }

    pub fn years(&self) -> Vec<i32> {
        self.points.iter().map(|(y, _)| *y).collect()
    }

    pub fn all_points(&self) -> impl Iterator<Item = &PlanePoint> {
        self.points.iter().flat_map(|(_, p)| p.iter())
    }

    /// Points CSV: `product,year,x,y`.
    pub fn write_points_csv<W: Write>(&self, writer: W) -> Result<(), PlaneError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["product", "year", "x", "y"])?;
        for p in self.all_points() {
            w.write_record([
                self.products[p.product].as_str(),
                &p.year.to_string(),
                &p.x.to_string(),
                &p.y.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Displacements CSV: `product,year,lag,dx,dy`, with `year` the start year.
    pub fn write_displacements_csv<W: Write>(&self, writer: W) -> Result<(), PlaneError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["product", "year", "lag", "dx", "dy"])?;
        for d in self.displacements.values().flatten() {
            w.write_record([
                self.products[d.start.product].as_str(),
                &d.start.year.to_string(),
                &d.lag.to_string(),
                &d.dx.to_string(),
                &d.dy.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Rebuilds plane data from a points CSV; displacements are recomputed for `lags`.
    pub fn read_points_csv<R: Read>(reader: R, lags: &[u32]) -> Result<Self, PlaneError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut products: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut by_year: BTreeMap<i32, Vec<PlanePoint>> = BTreeMap::new();
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| PlaneError::Malformed(format!("line {}: bad {what}", n + 2));
            if rec.len() != 4 {
                return Err(bad("field count"));
            }
            let product = match index.get(&rec[0]) {
                Some(&i) => i,
                None => {
                    products.push(rec[0].to_string());
                    index.insert(rec[0].to_string(), products.len() - 1);
                    products.len() - 1
                }
            };
            let year: i32 = rec[1].parse().map_err(|_| bad("year"))?;
            let x: f64 = rec[2].parse().map_err(|_| bad("x"))?;
            let y: f64 = rec[3].parse().map_err(|_| bad("y"))?;
            by_year
                .entry(year)
                .or_default()
                .push(PlanePoint { product, year, x, y });
        }
        Self::from_points(products, by_year.into_iter().collect(), lags)
    }
}

/// Places every product on the plane each year and collects displacements for `lags`.
///
/// `x` is the tied rank of Complexity (taken from its logarithm, which preserves order
/// without underflow) and `y` the tied rank of logPRODY, each ranked over its own
/// non-missing set. A point exists only where both metrics do.
pub fn build_trajectories(metrics: &MetricPanel, lags: &[u32]) -> Result<PlaneData, PlaneError> {
    let data = place_on_plane(metrics, lags)?;
    if !data.has_displacements() {
        return Err(PlaneError::NoOverlap);
    }
    Ok(data)
}

/// As [`build_trajectories`], but accepts panels where no displacement exists.
pub fn place_on_plane(metrics: &MetricPanel, lags: &[u32]) -> Result<PlaneData, PlaneError> {
    validate_lags(lags)?;
    let mut points = Vec::new();
    for ym in &metrics.years {
        let xs = tied_rank(&ym.ln_complexity)?;
        let ys = tied_rank(&ym.logprody)?;
        let pts: Vec<PlanePoint> = xs
            .iter()
            .zip(&ys)
            .enumerate()
            .filter_map(|(p, (x, y))| {
                Some(PlanePoint {
                    product: p,
                    year: ym.year,
                    x: (*x)?,
                    y: (*y)?,
                })
            })
            .collect();
        points.push((ym.year, pts));
    }
    PlaneData::from_points(metrics.products.clone(), points, lags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::YearMetrics;

    fn ranks(v: &[f64]) -> Vec<f64> {
        let opt: Vec<Option<f64>> = v.iter().map(|x| Some(*x)).collect();
        tied_rank(&opt).unwrap().into_iter().map(Option::unwrap).collect()
    }

    #[test]
    fn tied_rank_examples() {
        assert_eq!(ranks(&[3.0, 1.0, 2.0]), vec![1.0, 0.0, 0.5]);
        assert_eq!(ranks(&[5.0, 5.0]), vec![0.5, 0.5]);
        assert_eq!(ranks(&[10.0, 20.0, 20.0, 40.0]), vec![0.0, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn tied_rank_missing_and_too_few() {
        let r = tied_rank(&[Some(2.0), None, Some(1.0)]).unwrap();
        assert_eq!(r, vec![Some(1.0), None, Some(0.0)]);
        assert!(matches!(
            tied_rank(&[Some(1.0), None]),
            Err(PlaneError::TooFewValues(1))
        ));
    }

    fn panel(series: &[(i32, Vec<f64>, Vec<f64>)]) -> MetricPanel {
        let n = series[0].1.len();
        MetricPanel {
            countries: vec![],
            products: (0..n).map(|p| format!("P{p}")).collect(),
            years: series
                .iter()
                .map(|(y, c, l)| YearMetrics {
                    year: *y,
                    ln_complexity: c.iter().map(|v| Some(*v)).collect(),
                    logprody: l.iter().map(|v| Some(*v)).collect(),
                    ..Default::default()
                })
                .collect(),
        }
    }

    #[test]
    fn constant_ranks_give_zero_displacement() {
        let m = panel(&[
            (2000, vec![1.0, 2.0, 3.0], vec![3.0, 1.0, 2.0]),
            (2001, vec![1.5, 2.5, 3.5], vec![30.0, 10.0, 20.0]),
        ]);
        let d = build_trajectories(&m, &[1]).unwrap();
        assert!(d.displacements[&1].iter().all(|d| d.dx == 0.0 && d.dy == 0.0));
    }

    #[test]
    fn swapping_products_move_symmetrically() {
        let m = panel(&[
            (2000, vec![1.0, 2.0], vec![1.0, 2.0]),
            (2001, vec![2.0, 1.0], vec![2.0, 1.0]),
        ]);
        let d = &build_trajectories(&m, &[1]).unwrap().displacements[&1];
        assert_eq!((d[0].dx, d[0].dy), (1.0, 1.0));
        assert_eq!((d[1].dx, d[1].dy), (-1.0, -1.0));
    }

    #[test]
    fn lag_counts_on_three_years() {
        let s = |k: f64| (0..6).map(|p| ((p * 7 + 3) % 11) as f64 + k).collect::<Vec<_>>();
        let mut m = panel(&[(2000, s(0.0), s(1.0)), (2001, s(0.5), s(0.2)), (2002, s(0.1), s(0.0))]);
        // product 5 disappears in the last year
        m.years[2].ln_complexity[5] = None;
        let d = build_trajectories(&m, &[1, 2]).unwrap();
        assert_eq!(d.displacements[&1].len(), 6 + 5);
        assert_eq!(d.displacements[&2].len(), 5);
        assert_eq!(d.coverage[0].excluded, 1);
        assert_eq!(d.coverage[1].excluded, 1);
    }

    #[test]
    fn no_overlap() {
        let m = panel(&[
            (2000, vec![1.0, 2.0], vec![1.0, 2.0]),
            (2001, vec![1.0, 2.0], vec![1.0, 2.0]),
        ]);
        assert!(matches!(build_trajectories(&m, &[5]), Err(PlaneError::NoOverlap)));
    }

    #[test]
    fn points_csv_roundtrip() {
        let m = panel(&[
            (2000, vec![1.0, 2.0, 0.5], vec![1.0, 2.0, 3.0]),
            (2001, vec![2.0, 1.0, 0.1], vec![2.0, 1.0, 0.0]),
        ]);
        let d = build_trajectories(&m, &[1]).unwrap();
        let mut buf = Vec::new();
        d.write_points_csv(&mut buf).unwrap();
        let back = PlaneData::read_points_csv(buf.as_slice(), &[1]).unwrap();
        assert_eq!(back, d);
        let mut disp = Vec::new();
        d.write_displacements_csv(&mut disp).unwrap();
        assert!(String::from_utf8(disp).unwrap().starts_with("product,year,lag,dx,dy\n"));
    }
}

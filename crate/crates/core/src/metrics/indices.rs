use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{MetricsError, RcaMatrix};
use crate::ingest::TradePanel;
use crate::stats::spearman;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GdpIndex {
    /// `Σ_c W[c,p] log10 gdp_c`
    Logprody,
    /// `Σ_c W[c,p] gdp_c`
    Prody,
    /// `Σ_c s[c,p] gdp_c` with market shares `s`
    Sophistication,
}

/// Weighted GDP-per-capita index per product. `gdp` is aligned to the country axis.
pub fn weighted_gdp_index(
    rca: &RcaMatrix,
    exports: &Array2<f64>,
    gdp: &[f64],
    mode: GdpIndex,
) -> Result<Vec<f64>, MetricsError> {
    assert_eq!(gdp.len(), rca.n_countries(), "gdp vector not aligned to countries");
    let (weights, transform): (Array2<f64>, fn(f64) -> f64) = match mode {
        GdpIndex::Logprody => (rca.weights.clone(), f64::log10),
        GdpIndex::Prody => (rca.weights.clone(), |g| g),
        GdpIndex::Sophistication => (market_shares(exports), |g| g),
    };
    let g: Vec<f64> = gdp.iter().map(|&v| transform(v)).collect();
    weights
        .columns()
        .into_iter()
        .enumerate()
        .map(|(p, col)| {
            let mass: f64 = col.sum();
            if !(mass > 0.0) {
                return Err(MetricsError::NoExporters { product: p });
            }
            Ok(col
                .iter()
                .zip(&g)
                .filter(|(w, _)| **w > 0.0)
                .map(|(w, v)| w * v)
                .sum::<f64>()
                / mass)
        })
        .collect()
}

fn market_shares(exports: &Array2<f64>) -> Array2<f64> {
    let tot = exports.sum_axis(Axis(0));
    let mut s = exports.clone();
    for (mut col, t) in s.columns_mut().into_iter().zip(tot.iter()) {
        if *t > 0.0 {
            col.mapv_inplace(|v| v / t);
        }
    }
    s
}

/// Herfindahl index `Σ_c s[c,p]²` for each product of an export matrix.
pub fn herfindahl_matrix(exports: &Array2<f64>) -> Result<Vec<f64>, MetricsError> {
    let shares = market_shares(exports);
    let tot = exports.sum_axis(Axis(0));
    shares
        .columns()
        .into_iter()
        .enumerate()
        .map(|(p, col)| {
            if !(tot[p] > 0.0) {
                return Err(MetricsError::NoExporters { product: p });
            }
            Ok(col.iter().map(|s| s * s).sum())
        })
        .collect()
}

pub fn herfindahl(panel: &TradePanel, year: i32) -> Result<Vec<f64>, MetricsError> {
    let m = panel.matrix(year).ok_or(MetricsError::UnknownYear(year))?;
    herfindahl_matrix(m)
}

/// Squared Spearman correlation between GDPpc and Fitness over each product's top exporters.
///
/// Exporters are countries with positive RCA; the top `⌈top_share·N⌉` by RCA are kept,
/// but never fewer than three. Products without three usable exporters, or where
/// either variable is constant over the selection, get `None`.
pub fn exporter_correlation(rca: &RcaMatrix, fitness: &[Option<f64>], gdp: &[f64], top_share: f64) -> Vec<Option<f64>> {
    assert_eq!(fitness.len(), rca.n_countries());
    assert_eq!(gdp.len(), rca.n_countries());
    rca.rca
        .columns()
        .into_iter()
        .map(|col| {
            let mut exporters: Vec<(usize, f64)> = col
                .iter()
                .enumerate()
                .filter(|(c, r)| **r > 0.0 && fitness[*c].is_some())
                .map(|(c, r)| (c, *r))
                .collect();
            if exporters.len() < 3 {
                return None;
            }
            exporters.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let take = ((top_share * exporters.len() as f64).ceil() as usize)
                .max(3)
                .min(exporters.len());
            let sel = &exporters[..take];
            let g: Vec<f64> = sel.iter().map(|(c, _)| gdp[*c]).collect();
            let f: Vec<f64> = sel.iter().map(|(c, _)| fitness[*c].unwrap()).collect();
            spearman(&g, &f).map(|rho| rho * rho)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn assert_close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn single_exporter_product() {
        let e = array![[5.0, 1.0], [0.0, 3.0]];
        let r = RcaMatrix::from_exports(0, &e).unwrap();
        let gdp = [1e4, 1e2];
        assert_close(weighted_gdp_index(&r, &e, &gdp, GdpIndex::Logprody).unwrap()[0], 4.0);
        assert_close(weighted_gdp_index(&r, &e, &gdp, GdpIndex::Prody).unwrap()[0], 1e4);
        assert_close(
            weighted_gdp_index(&r, &e, &gdp, GdpIndex::Sophistication).unwrap()[0],
            1e4,
        );
    }

    #[test]
    fn two_equal_weight_exporters_give_geometric_exponent() {
        let e = array![[1.0, 1.0], [1.0, 1.0]];
        let r = RcaMatrix::from_exports(0, &e).unwrap();
        let l = weighted_gdp_index(&r, &e, &[1e2, 1e4], GdpIndex::Logprody).unwrap();
        assert_close(l[0], 3.0);
    }

    #[test]
    fn unequal_weights() {
        // R[.,0] = (0.5, 1.5)
        let e = array![[1.0, 3.0], [3.0, 1.0]];
        let r = RcaMatrix::from_exports(0, &e).unwrap();
        assert_close(r.weights[[0, 0]], 0.25);
        let l = weighted_gdp_index(&r, &e, &[1e2, 1e4], GdpIndex::Logprody).unwrap();
        assert_close(l[0], 3.5);
    }

    #[test]
    fn herfindahl_values() {
        assert_close(herfindahl_matrix(&array![[7.0], [0.0]]).unwrap()[0], 1.0);
        assert_close(herfindahl_matrix(&array![[2.0], [2.0], [2.0], [2.0]]).unwrap()[0], 0.25);
        assert_close(herfindahl_matrix(&array![[5.0], [3.0], [2.0]]).unwrap()[0], 0.38);
        assert!(matches!(
            herfindahl_matrix(&array![[1.0, 0.0], [1.0, 0.0]]),
            Err(MetricsError::NoExporters { product: 1 })
        ));
    }

    fn four_exporters() -> RcaMatrix {
        let e = array![[1.0, 4.0], [1.0, 3.0], [1.0, 2.0], [1.0, 1.0]];
        RcaMatrix::from_exports(0, &e).unwrap()
    }

    #[test]
    fn correlation_monotone_and_antitone() {
        let r = four_exporters();
        let f = [Some(1.0), Some(2.0), Some(3.0), Some(4.0)];
        let up = exporter_correlation(&r, &f, &[10.0, 20.0, 30.0, 40.0], 1.0);
        let down = exporter_correlation(&r, &f, &[40.0, 30.0, 20.0, 10.0], 1.0);
        // top_share 1 keeps all four exporters
        assert_close(up[0].unwrap(), 1.0);
        assert_close(down[0].unwrap(), 1.0);
    }

    #[test]
    fn correlation_textbook_spearman() {
        let r = four_exporters();
        let f = [Some(1.0), Some(2.0), Some(4.0), Some(3.0)];
        let v = exporter_correlation(&r, &f, &[1.0, 2.0, 3.0, 4.0], 1.0);
        assert_close(v[0].unwrap(), 0.64);
    }

    #[test]
    fn correlation_floor_and_missing() {
        let e = array![[1.0, 1.0], [1.0, 0.0], [1.0, 0.0], [1.0, 1.0], [2.0, 0.0]];
        let r = RcaMatrix::from_exports(0, &e).unwrap();
        let f = vec![Some(1.0), Some(2.0), Some(3.0), Some(4.0), Some(5.0)];
        let v = exporter_correlation(&r, &f, &[1.0, 2.0, 3.0, 4.0, 5.0], 0.3);
        // product 0: 5 exporters, ⌈1.5⌉ = 2 floored to 3 selected
        assert!(v[0].is_some());
        // product 1: only 2 exporters
        assert!(v[1].is_none());
    }
}

#![allow(dead_code)]

use ecplane::metrics::{
    binarize, fitness_complexity, herfindahl_matrix, raw_complexity, weighted_gdp_index, ConvergenceConfig, GdpIndex,
    RcaMatrix,
};
use ndarray::Array2;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

/// An export matrix with every row and column non-empty, GDP per capita per country and a
/// rescaling factor.
#[derive(Debug, Clone)]
pub struct TradeCase {
    pub exports: Array2<f64>,
    pub gdp: Vec<f64>,
    pub lambda: f64,
}

pub fn trade_case() -> impl Strategy<Value = TradeCase> {
    (3..9usize, 3..12usize).prop_flat_map(|(nc, np)| {
        let cell = prop_oneof![1 => Just(0.0), 4 => (-2.0..4.0f64).prop_map(|e| 10f64.powf(e))];
        (
            proptest::collection::vec(cell, nc * np),
            proptest::collection::vec((2.0..5.0f64).prop_map(|e| 10f64.powf(e)), nc),
            (-6.0..6.0f64).prop_map(|e| 10f64.powf(e)),
        )
            .prop_map(move |(vals, gdp, lambda)| {
                let mut e = Array2::from_shape_vec((nc, np), vals).unwrap();
                for c in 0..nc {
                    if e.row(c).sum() == 0.0 {
                        e[[c, c % np]] = 1.0;
                    }
                }
                for p in 0..np {
                    if e.column(p).sum() == 0.0 {
                        e[[p % nc, p]] = 1.0;
                    }
                }
                TradeCase {
                    exports: e,
                    gdp,
                    lambda,
                }
            })
    })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn all_close(a: &[f64], b: &[f64], rel: f64, what: &str) -> Result<(), TestCaseError> {
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        prop_assert!(close(*x, *y, rel), "{what}[{i}]: {x} vs {y}");
    }
    Ok(())
}

/// RCA, W, M, F, Q, H and logPRODY are unchanged when every export is multiplied by λ.
pub fn scale_invariance(t: &TradeCase) -> Result<(), TestCaseError> {
    let a = RcaMatrix::from_exports(0, &t.exports).unwrap();
    let scaled = t.exports.mapv(|v| v * t.lambda);
    let b = RcaMatrix::from_exports(0, &scaled).unwrap();
    all_close(a.rca.as_slice().unwrap(), b.rca.as_slice().unwrap(), 1e-12, "rca")?;
    all_close(a.weights.as_slice().unwrap(), b.weights.as_slice().unwrap(), 1e-12, "W")?;
    all_close(
        &herfindahl_matrix(&t.exports).unwrap(),
        &herfindahl_matrix(&scaled).unwrap(),
        1e-12,
        "H",
    )?;
    let la = weighted_gdp_index(&a, &t.exports, &t.gdp, GdpIndex::Logprody).unwrap();
    let lb = weighted_gdp_index(&b, &scaled, &t.gdp, GdpIndex::Logprody).unwrap();
    all_close(&la, &lb, 1e-12, "logprody")?;

    // a Balassa index sitting on the threshold may flip by one ulp under rescaling
    if a.rca.iter().any(|r| (r - 1.0).abs() < 1e-9) {
        return Ok(());
    }
    let (ma, _) = binarize(&a, 1.0);
    let (mb, _) = binarize(&b, 1.0);
    prop_assert_eq!(&ma, &mb);
    let cfg = ConvergenceConfig::fixed_iterations(200, true);
    let fa = fitness_complexity(&ma, &cfg).unwrap();
    let fb = fitness_complexity(&mb, &cfg).unwrap();
    prop_assert_eq!(fa.ln_fitness, fb.ln_fitness);
    prop_assert_eq!(fa.ln_complexity, fb.ln_complexity);
    Ok(())
}

/// `1/N ≤ H ≤ 1` over the N countries of the matrix.
pub fn herfindahl_bounds(t: &TradeCase) -> Result<(), TestCaseError> {
    let n = t.exports.nrows() as f64;
    for (p, h) in herfindahl_matrix(&t.exports).unwrap().iter().enumerate() {
        prop_assert!(*h >= 1.0 / n - 1e-12 && *h <= 1.0 + 1e-12, "H[{p}] = {h}");
    }
    Ok(())
}

/// logPRODY lies between the smallest and largest log10 GDPpc among exporters with `W > 0`.
pub fn logprody_bounds(t: &TradeCase) -> Result<(), TestCaseError> {
    let r = RcaMatrix::from_exports(0, &t.exports).unwrap();
    let l = weighted_gdp_index(&r, &t.exports, &t.gdp, GdpIndex::Logprody).unwrap();
    for (p, v) in l.iter().enumerate() {
        let g: Vec<f64> = (0..t.exports.nrows())
            .filter(|&c| r.weights[[c, p]] > 0.0)
            .map(|c| t.gdp[c].log10())
            .collect();
        let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(
            *v >= lo - 1e-12 && *v <= hi + 1e-12,
            "logprody[{p}] = {v} outside [{lo}, {hi}]"
        );
    }
    Ok(())
}

/// The un-normalized complexity update never exceeds the smallest exporter Fitness.
pub fn complexity_bound(t: &TradeCase) -> Result<(), TestCaseError> {
    let r = RcaMatrix::from_exports(0, &t.exports).unwrap();
    let (m, _) = binarize(&r, 1.0);
    let fc = fitness_complexity(&m, &ConvergenceConfig::default()).unwrap();
    let raw = raw_complexity(&m, &fc.ln_fitness);
    for (p, q) in raw.iter().enumerate() {
        let Some(q) = q else { continue };
        let min_f = (0..m.shape().0)
            .filter(|&c| m.get(c, p))
            .filter_map(|c| fc.ln_fitness[c])
            .fold(f64::INFINITY, f64::min);
        // ln(1 + 1e-9) in the log domain
        prop_assert!(*q <= min_f + 1e-9, "ln Q~[{p}] = {q} above ln min F = {min_f}");
    }
    Ok(())
}

//! Per-year metric stack: RCA, binary export matrix, Fitness/Complexity and the
//! product-level monetary and concentration indices.

mod fitness;
mod indices;
mod rca;

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fitness::{fitness_complexity, raw_complexity, ConvergenceConfig, FcDiagnostics, FitnessComplexity};
pub use indices::{exporter_correlation, herfindahl, herfindahl_matrix, weighted_gdp_index, GdpIndex};
pub use rca::{binarize, rca, BinaryMatrix, Degeneracy, RcaMatrix};

use crate::ingest::{GdpTable, TradePanel};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("world export is zero in year {0}")]
    ZeroWorldExport(i32),
    #[error("year {0} not present in panel")]
    UnknownYear(i32),
    #[error("product #{product} has no exporters")]
    NoExporters { product: usize },
    #[error("ranking did not stabilize within {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("binary matrix has no non-zero entries")]
    EmptyMatrix,
    #[error("missing GDP per capita for {country} in {year}")]
    MissingGdp { year: i32, country: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed metric file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub const COUNTRY_METRICS: [&str; 3] = ["fitness", "ln_fitness", "gdppc"];
pub const PRODUCT_METRICS: [&str; 7] = [
    "complexity",
    "ln_complexity",
    "logprody",
    "prody",
    "sophistication",
    "herfindahl",
    "exporter_r2",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub rca_threshold: f64,
    pub convergence: ConvergenceConfig,
    pub top_share: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            rca_threshold: 1.0,
            convergence: ConvergenceConfig::default(),
            top_share: 0.30,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        self.convergence.validate()?;
        if !(self.rca_threshold > 0.0) {
            return Err(MetricsError::InvalidConfig("rca_threshold must be positive".into()));
        }
        if !(self.top_share > 0.0 && self.top_share <= 1.0) {
            return Err(MetricsError::InvalidConfig("top_share must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// All metric series of one year. Country series follow the panel's country registry,
/// product series its product registry; `None` marks an undefined value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct YearMetrics {
    pub year: i32,
    pub fitness: Vec<Option<f64>>,
    pub ln_fitness: Vec<Option<f64>>,
    pub gdppc: Vec<Option<f64>>,
    pub complexity: Vec<Option<f64>>,
    pub ln_complexity: Vec<Option<f64>>,
    pub logprody: Vec<Option<f64>>,
    pub prody: Vec<Option<f64>>,
    pub sophistication: Vec<Option<f64>>,
    pub herfindahl: Vec<Option<f64>>,
    pub exporter_r2: Vec<Option<f64>>,
}

impl YearMetrics {
    pub fn series(&self, name: &str) -> Option<&Vec<Option<f64>>> {
        Some(match name {
            "fitness" => &self.fitness,
            "ln_fitness" => &self.ln_fitness,
            "gdppc" => &self.gdppc,
            "complexity" => &self.complexity,
            "ln_complexity" => &self.ln_complexity,
            "logprody" => &self.logprody,
            "prody" => &self.prody,
            "sophistication" => &self.sophistication,
            "herfindahl" => &self.herfindahl,
            "exporter_r2" => &self.exporter_r2,
            _ => return None,
        })
    }

    fn series_mut(&mut self, name: &str) -> Option<&mut Vec<Option<f64>>> {
        Some(match name {
            "fitness" => &mut self.fitness,
            "ln_fitness" => &mut self.ln_fitness,
            "gdppc" => &mut self.gdppc,
            "complexity" => &mut self.complexity,
            "ln_complexity" => &mut self.ln_complexity,
            "logprody" => &mut self.logprody,
            "prody" => &mut self.prody,
            "sophistication" => &mut self.sophistication,
            "herfindahl" => &mut self.herfindahl,
            "exporter_r2" => &mut self.exporter_r2,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricPanel {
    pub countries: Vec<String>,
    pub products: Vec<String>,
    pub years: Vec<YearMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearDiagnostics {
    pub year: i32,
    pub fitness_complexity: FcDiagnostics,
    pub empty_rows: Vec<usize>,
    pub empty_cols: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct MetricsOutput {
    pub panel: MetricPanel,
    pub diagnostics: Vec<YearDiagnostics>,
}

impl MetricsOutput {
    pub fn converged(&self) -> bool {
        self.diagnostics.iter().all(|d| d.fitness_complexity.stabilized)
    }
}

fn fmt_value(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricPanel {
    pub fn year(&self, year: i32) -> Option<&YearMetrics> {
        self.years.iter().find(|y| y.year == year)
    }

    pub fn year_list(&self) -> Vec<i32> {
        self.years.iter().map(|y| y.year).collect()
    }

    /// Long format `year,entity,metric,value`; missing values are written as empty fields.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["year", "entity", "metric", "value"])?;
        for ym in &self.years {
            let year = ym.year.to_string();
            for (names, entities) in [
                (&COUNTRY_METRICS[..], &self.countries),
                (&PRODUCT_METRICS[..], &self.products),
            ] {
                for name in names {
                    let series = ym.series(name).expect("known metric");
                    for (entity, v) in entities.iter().zip(series) {
                        w.write_record([year.as_str(), entity, name, &fmt_value(*v)])?;
                    }
                }
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, MetricsError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut countries: Vec<String> = Vec::new();
        let mut products: Vec<String> = Vec::new();
        let mut rows: Vec<(i32, String, String, Option<f64>)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 4 {
                return Err(MetricsError::Malformed(format!("expected 4 fields, got {}", rec.len())));
            }
            let year: i32 = rec[0]
                .parse()
                .map_err(|_| MetricsError::Malformed(format!("bad year {:?}", &rec[0])))?;
            let metric = rec[2].to_string();
            let value = if rec[3].is_empty() {
                None
            } else {
                Some(
                    rec[3]
                        .parse::<f64>()
                        .map_err(|_| MetricsError::Malformed(format!("bad value {:?}", &rec[3])))?,
                )
            };
            let registry = if COUNTRY_METRICS.contains(&metric.as_str()) {
                &mut countries
            } else if PRODUCT_METRICS.contains(&metric.as_str()) {
                &mut products
            } else {
                return Err(MetricsError::Malformed(format!("unknown metric {metric:?}")));
            };
            if !registry.contains(&rec[1].to_string()) {
                registry.push(rec[1].to_string());
            }
            rows.push((year, rec[1].to_string(), metric, value));
        }
        let c_idx: std::collections::HashMap<&str, usize> =
            countries.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let p_idx: std::collections::HashMap<&str, usize> =
            products.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
        let mut years: Vec<YearMetrics> = Vec::new();
        for (year, entity, metric, value) in &rows {
            let pos = match years.iter().position(|y| y.year == *year) {
                Some(i) => i,
                None => {
                    let mut ym = YearMetrics {
                        year: *year,
                        ..Default::default()
                    };
                    for n in COUNTRY_METRICS {
                        *ym.series_mut(n).unwrap() = vec![None; countries.len()];
                    }
                    for n in PRODUCT_METRICS {
                        *ym.series_mut(n).unwrap() = vec![None; products.len()];
                    }
                    years.push(ym);
                    years.len() - 1
                }
            };
            let idx = if COUNTRY_METRICS.contains(&metric.as_str()) {
                c_idx[entity.as_str()]
            } else {
                p_idx[entity.as_str()]
            };
            years[pos].series_mut(metric).unwrap()[idx] = *value;
        }
        years.sort_by_key(|y| y.year);
        Ok(Self {
            countries,
            products,
            years,
        })
    }

    pub fn to_json(&self) -> Result<String, MetricsError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, MetricsError> {
        Ok(serde_json::from_str(s)?)
    }
}

fn year_metrics(
    panel: &TradePanel,
    gdp: &GdpTable,
    year: i32,
    cfg: &MetricsConfig,
) -> Result<(YearMetrics, YearDiagnostics), MetricsError> {
    let exports = panel.matrix(year).ok_or(MetricsError::UnknownYear(year))?;
    let gdp_vec: Vec<f64> = gdp
        .vector(year, &panel.countries)
        .into_iter()
        .zip(&panel.countries)
        .map(|(g, c)| {
            g.ok_or_else(|| MetricsError::MissingGdp {
                year,
                country: c.clone(),
            })
        })
        .collect::<Result<_, _>>()?;
    let r = RcaMatrix::from_exports(year, exports)?;
    let (m, degeneracy) = binarize(&r, cfg.rca_threshold);
    let fc = fitness_complexity(&m, &cfg.convergence)?;
    let some = |v: Vec<f64>| v.into_iter().map(Some).collect::<Vec<_>>();
    let fitness = fc.fitness();
    let ym = YearMetrics {
        year,
        exporter_r2: exporter_correlation(&r, &fitness, &gdp_vec, cfg.top_share),
        fitness,
        ln_fitness: fc.ln_fitness.clone(),
        gdppc: some(gdp_vec.clone()),
        complexity: fc.complexity(),
        ln_complexity: fc.ln_complexity.clone(),
        logprody: some(weighted_gdp_index(&r, exports, &gdp_vec, GdpIndex::Logprody)?),
        prody: some(weighted_gdp_index(&r, exports, &gdp_vec, GdpIndex::Prody)?),
        sophistication: some(weighted_gdp_index(&r, exports, &gdp_vec, GdpIndex::Sophistication)?),
        herfindahl: some(herfindahl_matrix(exports)?),
    };
    let diag = YearDiagnostics {
        year,
        fitness_complexity: fc.diagnostics,
        empty_rows: degeneracy.empty_rows,
        empty_cols: degeneracy.empty_cols,
    };
    Ok((ym, diag))
}

/// Computes the full metric stack for every year of an aligned panel. Years run in parallel.
///
/// Years whose ranking did not stabilize are still returned; check
/// [`MetricsOutput::converged`].
pub fn compute_metrics(panel: &TradePanel, gdp: &GdpTable, cfg: &MetricsConfig) -> Result<MetricsOutput, MetricsError> {
    cfg.validate()?;
    let per_year: Vec<(YearMetrics, YearDiagnostics)> = panel
        .years
        .par_iter()
        .map(|&y| year_metrics(panel, gdp, y, cfg))
        .collect::<Result<_, _>>()?;
    let (years, diagnostics) = per_year.into_iter().unzip();
    Ok(MetricsOutput {
        panel: MetricPanel {
            countries: panel.countries.clone(),
            products: panel.products.clone(),
            years,
        },
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_inputs() -> (TradePanel, GdpTable) {
        let mut recs = Vec::new();
        let mut gdp = GdpTable::default();
        for (year, bump) in [(2000, 0.0), (2001, 1.0)] {
            for (c, row) in [
                [9.0, 4.0, 1.0, 2.0],
                [5.0, 3.0, 0.0, 1.0],
                [4.0, 0.0, 0.0, 3.0],
                [2.0, 1.0, 6.0, 0.0],
            ]
            .iter()
            .enumerate()
            {
                for (p, v) in row.iter().enumerate() {
                    if *v > 0.0 {
                        recs.push((year, format!("C{c}"), format!("P{p}"), v + bump));
                    }
                }
                gdp.insert(year, &format!("C{c}"), 10f64.powi(c as i32 + 2)).unwrap();
            }
        }
        (TradePanel::from_records(recs).unwrap(), gdp)
    }

    #[test]
    fn panel_roundtrips_through_csv_and_json() {
        let (panel, gdp) = small_inputs();
        let out = compute_metrics(&panel, &gdp, &MetricsConfig::default()).unwrap();
        assert!(out.converged());
        let mut buf = Vec::new();
        out.panel.write_csv(&mut buf).unwrap();
        let back = MetricPanel::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, out.panel);
        let json = out.panel.to_json().unwrap();
        assert_eq!(MetricPanel::from_json(&json).unwrap(), out.panel);
    }

    #[test]
    fn fitness_mean_is_one_each_year() {
        let (panel, gdp) = small_inputs();
        let out = compute_metrics(&panel, &gdp, &MetricsConfig::default()).unwrap();
        for ym in &out.panel.years {
            let f: Vec<f64> = ym.fitness.iter().flatten().copied().collect();
            assert!((f.iter().sum::<f64>() / f.len() as f64 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn missing_gdp_is_reported() {
        let (panel, mut gdp) = small_inputs();
        gdp.entries.get_mut(&2001).unwrap().remove("C2");
        let err = compute_metrics(&panel, &gdp, &MetricsConfig::default()).unwrap_err();
        assert!(matches!(err, MetricsError::MissingGdp { year: 2001, .. }));
    }
}

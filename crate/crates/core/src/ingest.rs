//! Loading, validation and alignment of export panels and GDP-per-capita tables.
//!
//! Trade files are long-format CSV (`year,country,product,value`, optionally
//! gzip-compressed when the path ends in `.gz`). Duplicate trade keys are
//! summed, since customs records are transaction level. GDP files
//! (`year,country,gdppc`) hold one scalar per country-year and reject
//! duplicates.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("negative export value {value} at line {line}")]
    NegativeValue { line: u64, value: f64 },
    #[error("trade panel is empty")]
    EmptyPanel,
    #[error("duplicate GDP entry for ({year}, {country}) at line {line}")]
    DuplicateKey { year: i32, country: String, line: u64 },
    #[error("non-positive GDP per capita {value} at line {line}")]
    NonPositiveGdp { line: u64, value: f64 },
    #[error("invalid cleaning config: {0}")]
    InvalidConfig(String),
    #[error("nothing left after cleaning: {0}")]
    EmptyAfterCleaning(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Column names of the long-format trade CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TradeSchema {
    pub year: String,
    pub country: String,
    pub product: String,
    pub value: String,
}

impl Default for TradeSchema {
    fn default() -> Self {
        Self {
            year: "year".into(),
            country: "country".into(),
            product: "product".into(),
            value: "value".into(),
        }
    }
}

/// Yearly export matrices `E[c,p]` (countries × products) over shared registries.
#[derive(Debug, Clone, PartialEq)]
pub struct TradePanel {
    pub years: Vec<i32>,
    pub countries: Vec<String>,
    pub products: Vec<String>,
    /// One matrix per entry of `years`, shape `(countries, products)`.
    pub values: Vec<Array2<f64>>,
}

impl TradePanel {
    /// Builds a panel from `(year, country, product, value)` records, summing duplicates.
    pub fn from_records<I>(records: I) -> Result<Self, IngestError>
    where
        I: IntoIterator<Item = (i32, String, String, f64)>,
    {
        let mut cells: BTreeMap<(i32, String, String), f64> = BTreeMap::new();
        for (year, country, product, value) in records {
            if value < 0.0 || value.is_nan() {
                return Err(IngestError::NegativeValue { line: 0, value });
            }
            *cells.entry((year, country, product)).or_insert(0.0) += value;
        }
        Self::from_cells(cells)
    }

    fn from_cells(cells: BTreeMap<(i32, String, String), f64>) -> Result<Self, IngestError> {
        if cells.is_empty() {
            return Err(IngestError::EmptyPanel);
        }
        let years: BTreeSet<i32> = cells.keys().map(|k| k.0).collect();
        let countries: BTreeSet<&String> = cells.keys().map(|k| &k.1).collect();
        let products: BTreeSet<&String> = cells.keys().map(|k| &k.2).collect();
        let years: Vec<i32> = years.into_iter().collect();
        let countries: Vec<String> = countries.into_iter().cloned().collect();
        let products: Vec<String> = products.into_iter().cloned().collect();
        let c_idx = index_of(&countries);
        let p_idx = index_of(&products);
        let y_idx: BTreeMap<i32, usize> = years.iter().enumerate().map(|(i, y)| (*y, i)).collect();
        let mut values = vec![Array2::zeros((countries.len(), products.len())); years.len()];
        for ((y, c, p), v) in &cells {
            values[y_idx[y]][[c_idx[c], p_idx[p]]] += v;
        }
        Ok(Self {
            years,
            countries,
            products,
            values,
        })
    }

    pub fn year_index(&self, year: i32) -> Option<usize> {
        self.years.iter().position(|&y| y == year)
    }

    pub fn matrix(&self, year: i32) -> Option<&Array2<f64>> {
        self.year_index(year).map(|i| &self.values[i])
    }

    pub fn total(&self) -> f64 {
        self.values.iter().map(|m| m.sum()).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for m in &mut out.values {
            m.mapv_inplace(|v| v * factor);
        }
        out
    }

    /// Writes the panel as long-format CSV, omitting zero cells.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["year", "country", "product", "value"])?;
        for (yi, year) in self.years.iter().enumerate() {
            let m = &self.values[yi];
            for (ci, c) in self.countries.iter().enumerate() {
                for (pi, p) in self.products.iter().enumerate() {
                    let v = m[[ci, pi]];
                    if v != 0.0 {
                        w.write_record([year.to_string(), c.clone(), p.clone(), v.to_string()])?;
                    }
                }
            }
        }
        w.flush().map_err(|e| IngestError::Io {
            path: "<writer>".into(),
            source: e,
        })?;
        Ok(())
    }
}

fn index_of(names: &[String]) -> BTreeMap<String, usize> {
    names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect()
}

/// GDP per capita per year and country.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GdpTable {
    pub entries: BTreeMap<i32, BTreeMap<String, f64>>,
}

impl GdpTable {
    pub fn insert(&mut self, year: i32, country: &str, gdppc: f64) -> Result<(), IngestError> {
        if !(gdppc > 0.0) || !gdppc.is_finite() {
            return Err(IngestError::NonPositiveGdp { line: 0, value: gdppc });
        }
        let slot = self.entries.entry(year).or_default();
        if slot.contains_key(country) {
            return Err(IngestError::DuplicateKey {
                year,
                country: country.into(),
                line: 0,
            });
        }
        slot.insert(country.to_string(), gdppc);
        Ok(())
    }

    pub fn get(&self, year: i32, country: &str) -> Option<f64> {
        self.entries.get(&year)?.get(country).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(|m| m.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn years(&self) -> Vec<i32> {
        self.entries.keys().copied().collect()
    }

    pub fn countries(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.entries.values().flat_map(|m| m.keys()).collect();
        set.into_iter().cloned().collect()
    }

    /// GDP values for `countries` in `year`, `None` where absent.
    pub fn vector(&self, year: i32, countries: &[String]) -> Vec<Option<f64>> {
        countries.iter().map(|c| self.get(year, c)).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["year", "country", "gdppc"])?;
        for (year, m) in &self.entries {
            for (c, v) in m {
                w.write_record([year.to_string(), c.clone(), v.to_string()])?;
            }
        }
        w.flush().map_err(|e| IngestError::Io {
            path: "<writer>".into(),
            source: e,
        })?;
        Ok(())
    }
}

fn open(path: &Path) -> Result<Box<dyn Read>, IngestError> {
    let file = File::open(path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let reader = BufReader::new(file);
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(GzDecoder::new(reader)))
    } else {
        Ok(Box::new(reader))
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| IngestError::MalformedRow {
            line: 1,
            reason: format!("missing column `{name}`"),
        })
}

fn field(rec: &csv::StringRecord, idx: usize, line: u64) -> Result<&str, IngestError> {
    rec.get(idx).map(str::trim).ok_or_else(|| IngestError::MalformedRow {
        line,
        reason: format!("missing field {}", idx + 1),
    })
}

fn parse<T: std::str::FromStr>(s: &str, what: &str, line: u64) -> Result<T, IngestError> {
    s.parse().map_err(|_| IngestError::MalformedRow {
        line,
        reason: format!("cannot parse {what} from `{s}`"),
    })
}

pub fn load_trade_panel(path: &Path, schema: &TradeSchema) -> Result<TradePanel, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(open(path)?);
    let headers = rdr.headers()?.clone();
    let iy = column(&headers, &schema.year)?;
    let ic = column(&headers, &schema.country)?;
    let ip = column(&headers, &schema.product)?;
    let iv = column(&headers, &schema.value)?;
    let mut cells: BTreeMap<(i32, String, String), f64> = BTreeMap::new();
    for (n, rec) in rdr.records().enumerate() {
        let line = n as u64 + 2;
        let rec = rec.map_err(|e| IngestError::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        let year: i32 = parse(field(&rec, iy, line)?, "year", line)?;
        let country = field(&rec, ic, line)?.to_string();
        let product = field(&rec, ip, line)?.to_string();
        let value: f64 = parse(field(&rec, iv, line)?, "value", line)?;
        if country.is_empty() || product.is_empty() || !value.is_finite() {
            return Err(IngestError::MalformedRow {
                line,
                reason: "empty code or non-finite value".into(),
            });
        }
        if value < 0.0 {
            return Err(IngestError::NegativeValue { line, value });
        }
        *cells.entry((year, country, product)).or_insert(0.0) += value;
    }
    TradePanel::from_cells(cells)
}

pub fn load_gdp_table(path: &Path) -> Result<GdpTable, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(open(path)?);
    let headers = rdr.headers()?.clone();
    let iy = column(&headers, "year")?;
    let ic = column(&headers, "country")?;
    let ig = column(&headers, "gdppc")?;
    let mut table = GdpTable::default();
    for (n, rec) in rdr.records().enumerate() {
        let line = n as u64 + 2;
        let rec = rec.map_err(|e| IngestError::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        let year: i32 = parse(field(&rec, iy, line)?, "year", line)?;
        let country = field(&rec, ic, line)?;
        let value: f64 = parse(field(&rec, ig, line)?, "gdppc", line)?;
        table.insert(year, country, value).map_err(|e| match e {
            IngestError::NonPositiveGdp { value, .. } => IngestError::NonPositiveGdp { line, value },
            IngestError::DuplicateKey { year, country, .. } => IngestError::DuplicateKey { year, country, line },
            other => other,
        })?;
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningConfig {
    /// Countries below this share of world export in a year where they are present are dropped.
    pub min_total_export_share: f64,
    /// Minimum number of years with positive export; `None` means every panel year.
    pub min_years_present: Option<usize>,
    /// Product code → merged product code.
    pub aggregation_map: BTreeMap<String, String>,
    pub drop_countries: Vec<String>,
    pub drop_products: Vec<String>,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            min_total_export_share: 1e-5,
            min_years_present: None,
            aggregation_map: BTreeMap::new(),
            drop_countries: Vec::new(),
            drop_products: Vec::new(),
        }
    }
}

impl CleaningConfig {
    /// Keeps every country and product that has data.
    pub fn permissive() -> Self {
        Self {
            min_total_export_share: 0.0,
            min_years_present: Some(0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if !(0.0..=0.01).contains(&self.min_total_export_share) {
            return Err(IngestError::InvalidConfig(format!(
                "min_total_export_share {} outside [0, 0.01]",
                self.min_total_export_share
            )));
        }
        for (from, to) in &self.aggregation_map {
            if from != to && self.aggregation_map.get(to).is_some_and(|next| next != to) {
                return Err(IngestError::InvalidConfig(format!(
                    "aggregation map chains {from} -> {to} -> {}",
                    self.aggregation_map[to]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    CountryDropped,
    ProductDropped,
    ProductMerged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningEntry {
    pub entity: String,
    pub kind: EntityKind,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CleaningReport {
    pub entries: Vec<CleaningEntry>,
}

impl CleaningReport {
    fn push(&mut self, entity: &str, kind: EntityKind, reason: String) {
        self.entries.push(CleaningEntry {
            entity: entity.to_string(),
            kind,
            reason,
        });
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Applies drop lists, product aggregation and country filters, then aligns the GDP table
/// to the surviving country/year registries.
pub fn clean_and_align(
    panel: &TradePanel,
    gdp: &GdpTable,
    cfg: &CleaningConfig,
) -> Result<(TradePanel, GdpTable, CleaningReport), IngestError> {
    cfg.validate()?;
    let mut report = CleaningReport::default();

    let dropped_c: BTreeSet<&str> = cfg.drop_countries.iter().map(String::as_str).collect();
    let dropped_p: BTreeSet<&str> = cfg.drop_products.iter().map(String::as_str).collect();
    for c in panel.countries.iter().filter(|c| dropped_c.contains(c.as_str())) {
        report.push(c, EntityKind::CountryDropped, "listed in drop_countries".into());
    }
    for p in panel.products.iter().filter(|p| dropped_p.contains(p.as_str())) {
        report.push(p, EntityKind::ProductDropped, "listed in drop_products".into());
    }

    // product aggregation: column sums into the merged code
    let mut merged_products: BTreeSet<String> = BTreeSet::new();
    for p in panel.products.iter().filter(|p| !dropped_p.contains(p.as_str())) {
        let target = cfg.aggregation_map.get(p).unwrap_or(p);
        if target != p {
            report.push(p, EntityKind::ProductMerged, format!("merged into {target}"));
        }
        merged_products.insert(target.clone());
    }
    let products: Vec<String> = merged_products.into_iter().collect();
    let p_target = index_of(&products);
    let kept_c: Vec<usize> = (0..panel.countries.len())
        .filter(|&i| !dropped_c.contains(panel.countries[i].as_str()))
        .collect();

    let mut values: Vec<Array2<f64>> = panel
        .values
        .iter()
        .map(|m| {
            let mut out = Array2::zeros((kept_c.len(), products.len()));
            for (pi, p) in panel.products.iter().enumerate() {
                if dropped_p.contains(p.as_str()) {
                    continue;
                }
                let target = p_target[cfg.aggregation_map.get(p).unwrap_or(p)];
                for (new_c, &old_c) in kept_c.iter().enumerate() {
                    out[[new_c, target]] += m[[old_c, pi]];
                }
            }
            out
        })
        .collect();
    let mut countries: Vec<String> = kept_c.iter().map(|&i| panel.countries[i].clone()).collect();

    // country filters
    let min_years = cfg.min_years_present.unwrap_or(panel.years.len());
    let mut keep = vec![true; countries.len()];
    for (ci, c) in countries.iter().enumerate() {
        let mut present = 0;
        let mut reason = None;
        for (yi, m) in values.iter().enumerate() {
            let row_total = m.row(ci).sum();
            let world = m.sum();
            if row_total > 0.0 {
                present += 1;
                if world > 0.0 && row_total / world < cfg.min_total_export_share && reason.is_none() {
                    reason = Some(format!(
                        "export share {:.3e} below {:.1e} in {}",
                        row_total / world,
                        cfg.min_total_export_share,
                        panel.years[yi]
                    ));
                }
            }
            if gdp.get(panel.years[yi], c).is_none() && reason.is_none() {
                reason = Some(format!("no GDP per capita for {}", panel.years[yi]));
            }
        }
        if reason.is_none() && (present < min_years || present == 0) {
            reason = Some(format!("present in {present} years, need {}", min_years.max(1)));
        }
        if let Some(r) = reason {
            keep[ci] = false;
            report.push(c, EntityKind::CountryDropped, r);
        }
    }
    let kept: Vec<usize> = (0..countries.len()).filter(|&i| keep[i]).collect();
    countries = kept.iter().map(|&i| countries[i].clone()).collect();
    values = values.iter().map(|m| m.select(ndarray::Axis(0), &kept)).collect();

    // products with no world export in some year have undefined RCA columns
    let mut keep_p = vec![true; products.len()];
    for (pi, p) in products.iter().enumerate() {
        if let Some(yi) = values.iter().position(|m| m.column(pi).sum() <= 0.0) {
            keep_p[pi] = false;
            report.push(
                p,
                EntityKind::ProductDropped,
                format!("no exports in {}", panel.years[yi]),
            );
        }
    }
    let kept_p: Vec<usize> = (0..products.len()).filter(|&i| keep_p[i]).collect();
    let products: Vec<String> = kept_p.iter().map(|&i| products[i].clone()).collect();
    let values: Vec<Array2<f64>> = values.iter().map(|m| m.select(ndarray::Axis(1), &kept_p)).collect();

    if countries.len() < 2 {
        return Err(IngestError::EmptyAfterCleaning(format!(
            "{} countries remain",
            countries.len()
        )));
    }
    if products.len() < 2 {
        return Err(IngestError::EmptyAfterCleaning(format!(
            "{} products remain",
            products.len()
        )));
    }

    let mut aligned = GdpTable::default();
    for &year in &panel.years {
        for c in &countries {
            let v = gdp.get(year, c).expect("countries without GDP were dropped");
            aligned.insert(year, c, v)?;
        }
    }
    let out = TradePanel {
        years: panel.years.clone(),
        countries,
        products,
        values,
    };
    Ok((out, aligned, report))
}

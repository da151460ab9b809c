use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::ingest::{GdpTable, TradePanel};
use crate::metrics::BinaryMatrix;

/// How capabilities are assigned to countries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endowment {
    /// Country `c` holds each capability independently with a probability falling
    /// linearly from `p_max` (first country) to `p_min` (last country).
    Random { p_max: f64, p_min: f64 },
    /// Country `c` holds capabilities `0..sizes[c]`.
    Prefix { sizes: Vec<usize> },
}

/// How capability requirements are assigned to products.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Requirements {
    /// A uniformly drawn set whose size is uniform in `min_size..=max_size`.
    Random { min_size: usize, max_size: usize },
    /// Product `p` requires capabilities `0..sizes[p]`.
    Prefix { sizes: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CapabilityModel {
    pub n_countries: usize,
    pub n_products: usize,
    pub n_capabilities: usize,
    pub endowment: Endowment,
    pub requirements: Requirements,
    /// Export value of a feasible cell is `base_volume × LogNormal(0, volume_sigma)`.
    pub base_volume: f64,
    pub volume_sigma: f64,
    /// `log10 GDPpc = gdp_intercept + gdp_slope × endowment fraction + N(0, gdp_noise)`.
    pub gdp_intercept: f64,
    pub gdp_slope: f64,
    pub gdp_noise: f64,
    pub n_years: usize,
    pub first_year: i32,
    pub seed: u64,
    /// On a degenerate draw, retry with the next attempt's stream instead of failing.
    pub regenerate: bool,
    pub max_attempts: usize,
}

impl Default for CapabilityModel {
    fn default() -> Self {
        Self {
            n_countries: 100,
            n_products: 200,
            n_capabilities: 30,
            endowment: Endowment::Random { p_max: 0.9, p_min: 0.2 },
            requirements: Requirements::Random {
                min_size: 1,
                max_size: 6,
            },
            base_volume: 1.0e6,
            volume_sigma: 1.0,
            gdp_intercept: 2.0,
            gdp_slope: 4.0,
            gdp_noise: 0.2,
            n_years: 5,
            first_year: 2000,
            seed: 0,
            regenerate: true,
            max_attempts: 100,
        }
    }
}

impl CapabilityModel {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidModel(m));
        if self.n_countries < 2 || self.n_products < 2 || self.n_capabilities < 1 {
            return bad("need at least 2 countries, 2 products and 1 capability".into());
        }
        if self.n_years < 1 {
            return bad("n_years must be at least 1".into());
        }
        if !(self.base_volume > 0.0) || !(self.volume_sigma >= 0.0) || !(self.gdp_noise >= 0.0) {
            return bad("volume and noise parameters must be non-negative (base positive)".into());
        }
        match &self.endowment {
            Endowment::Random { p_max, p_min } => {
                if !(0.0..=1.0).contains(p_min) || !(0.0..=1.0).contains(p_max) || p_min > p_max {
                    return bad(format!("endowment probabilities {p_min}..{p_max} invalid"));
                }
            }
            Endowment::Prefix { sizes } => {
                if sizes.len() != self.n_countries || sizes.iter().any(|&s| s > self.n_capabilities) {
                    return bad("prefix endowment sizes must match countries and fit capabilities".into());
                }
            }
        }
        match &self.requirements {
            Requirements::Random { min_size, max_size } => {
                if *min_size == 0 || min_size > max_size || *max_size > self.n_capabilities {
                    return bad(format!("requirement sizes {min_size}..={max_size} invalid"));
                }
            }
            Requirements::Prefix { sizes } => {
                if sizes.len() != self.n_products || sizes.iter().any(|&s| s == 0 || s > self.n_capabilities) {
                    return bad("prefix requirement sizes must be non-empty and fit capabilities".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPanel {
    pub panel: TradePanel,
    pub gdp: GdpTable,
    /// `incidence[c,p]` is true when country `c` holds every capability product `p` needs.
    pub incidence: BinaryMatrix,
    pub endowments: Vec<Vec<bool>>,
    pub requirements: Vec<Vec<usize>>,
    /// Attempts used, including the successful one.
    pub attempts: usize,
}

fn code(prefix: char, i: usize, n: usize) -> String {
    let width = n.saturating_sub(1).to_string().len().max(3);
    format!("{prefix}{i:0width$}")
}

/// Draws a trade panel from the capability model.
///
/// A country exports a product in every year exactly when it holds all of the product's
/// required capabilities; values are redrawn each year. GDP per capita rises with the
/// share of capabilities held.
pub fn generate_nested_panel(model: &CapabilityModel) -> Result<SyntheticPanel, SynthError> {
    model.validate()?;
    let attempts = if model.regenerate { model.max_attempts.max(1) } else { 1 };
    let mut last = None;
    for attempt in 0..attempts {
        let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
        rng.set_stream(attempt as u64);
        match draw(model, &mut rng) {
            Ok(mut s) => {
                s.attempts = attempt + 1;
                return Ok(s);
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

fn draw(model: &CapabilityModel, rng: &mut ChaCha8Rng) -> Result<SyntheticPanel, SynthError> {
    let (nc, np, nk) = (model.n_countries, model.n_products, model.n_capabilities);
    let endowments: Vec<Vec<bool>> = match &model.endowment {
        Endowment::Random { p_max, p_min } => (0..nc)
            .map(|c| {
                let p = p_max - (p_max - p_min) * c as f64 / (nc - 1) as f64;
                (0..nk).map(|_| rng.random_bool(p)).collect()
            })
            .collect(),
        Endowment::Prefix { sizes } => sizes.iter().map(|&s| (0..nk).map(|k| k < s).collect()).collect(),
    };
    let requirements: Vec<Vec<usize>> = match &model.requirements {
        Requirements::Random { min_size, max_size } => (0..np)
            .map(|_| {
                let size = rng.random_range(*min_size..=*max_size);
                let mut req = sample(rng, nk, size).into_vec();
                req.sort_unstable();
                req
            })
            .collect(),
        Requirements::Prefix { sizes } => sizes.iter().map(|&s| (0..s).collect()).collect(),
    };
    let incidence = BinaryMatrix::from_fn(nc, np, |c, p| requirements[p].iter().all(|&k| endowments[c][k]));
    let deg = incidence.degeneracy();
    if let Some(&c) = deg.empty_rows.first() {
        return Err(SynthError::DegenerateModel(format!("country {c} exports nothing")));
    }
    if let Some(&p) = deg.empty_cols.first() {
        return Err(SynthError::DegenerateModel(format!("product {p} has no exporter")));
    }

    let countries: Vec<String> = (0..nc).map(|c| code('C', c, nc)).collect();
    let products: Vec<String> = (0..np).map(|p| code('P', p, np)).collect();
    let volume = LogNormal::new(0.0, model.volume_sigma).expect("validated sigma");
    let noise = Normal::new(0.0, model.gdp_noise).expect("validated noise");
    let mut records = Vec::new();
    for t in 0..model.n_years {
        let year = model.first_year + t as i32;
        for c in 0..nc {
            for p in 0..np {
                if incidence.get(c, p) {
                    let v = model.base_volume * volume.sample(rng);
                    records.push((year, countries[c].clone(), products[p].clone(), v));
                }
            }
        }
    }
    let panel = TradePanel::from_records(records).map_err(|e| SynthError::InvalidModel(e.to_string()))?;
    let mut gdp = GdpTable::default();
    for (c, name) in countries.iter().enumerate() {
        let frac = endowments[c].iter().filter(|&&b| b).count() as f64 / nk as f64;
        let log_gdp = model.gdp_intercept + model.gdp_slope * frac + noise.sample(rng);
        for t in 0..model.n_years {
            gdp.insert(model.first_year + t as i32, name, 10f64.powf(log_gdp))
                .map_err(|e| SynthError::InvalidModel(e.to_string()))?;
        }
    }
    Ok(SyntheticPanel {
        panel,
        gdp,
        incidence,
        endowments,
        requirements,
        attempts: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{binarize, fitness_complexity, ConvergenceConfig, RcaMatrix};

    #[test]
    fn single_capability_gives_full_matrix_and_unit_fitness() {
        let model = CapabilityModel {
            n_countries: 6,
            n_products: 8,
            n_capabilities: 1,
            endowment: Endowment::Random { p_max: 1.0, p_min: 1.0 },
            requirements: Requirements::Random {
                min_size: 1,
                max_size: 1,
            },
            volume_sigma: 0.0,
            n_years: 1,
            ..Default::default()
        };
        let s = generate_nested_panel(&model).unwrap();
        assert!(s.incidence.cells.iter().all(|&b| b));
        let r = RcaMatrix::from_exports(2000, &s.panel.values[0]).unwrap();
        let (m, _) = binarize(&r, 1.0);
        assert_eq!(m, s.incidence);
        let fc = fitness_complexity(&m, &ConvergenceConfig::default()).unwrap();
        assert!(fc.fitness().iter().all(|f| (f.unwrap() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn prefix_model_is_strictly_triangular() {
        let n = 6;
        let model = CapabilityModel {
            n_countries: n,
            n_products: n,
            n_capabilities: n,
            endowment: Endowment::Prefix {
                sizes: (1..=n).rev().collect(),
            },
            requirements: Requirements::Prefix {
                sizes: (1..=n).collect(),
            },
            n_years: 2,
            ..Default::default()
        };
        let s = generate_nested_panel(&model).unwrap();
        for c in 0..n {
            for p in 0..n {
                assert_eq!(s.incidence.get(c, p), c + p < n);
            }
        }
        // binarized exports never claim a product outside the capability incidence
        for m in &s.panel.values {
            let (b, _) = binarize(&RcaMatrix::from_exports(0, m).unwrap(), 1.0);
            assert!(b.cells.iter().zip(s.incidence.cells.iter()).all(|(x, i)| !*x || *i));
        }
    }

    #[test]
    fn same_seed_same_panel() {
        let model = CapabilityModel {
            n_countries: 20,
            n_products: 30,
            n_years: 2,
            seed: 11,
            ..Default::default()
        };
        let a = generate_nested_panel(&model).unwrap();
        let b = generate_nested_panel(&model).unwrap();
        assert_eq!(a.panel, b.panel);
        assert_eq!(a.gdp, b.gdp);
        let c = generate_nested_panel(&CapabilityModel { seed: 12, ..model }).unwrap();
        assert_ne!(a.panel, c.panel);
    }

    #[test]
    fn degenerate_model_without_regeneration() {
        let model = CapabilityModel {
            n_countries: 4,
            n_products: 4,
            n_capabilities: 10,
            endowment: Endowment::Random { p_max: 0.0, p_min: 0.0 },
            regenerate: false,
            ..Default::default()
        };
        assert!(matches!(
            generate_nested_panel(&model),
            Err(SynthError::DegenerateModel(_))
        ));
    }

    #[test]
    fn gdp_rises_with_endowment() {
        let model = CapabilityModel {
            gdp_noise: 0.0,
            n_years: 1,
            ..Default::default()
        };
        let s = generate_nested_panel(&model).unwrap();
        let held: Vec<usize> = s.endowments.iter().map(|e| e.iter().filter(|&&b| b).count()).collect();
        let g: Vec<f64> = s.panel.countries.iter().map(|c| s.gdp.get(2000, c).unwrap()).collect();
        for a in 0..held.len() {
            for b in 0..held.len() {
                if held[a] > held[b] {
                    assert!(g[a] > g[b]);
                }
            }
        }
    }
}

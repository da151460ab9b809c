//! Fitness and Complexity as the fixed point of the coupled non-linear map
//!
//! ```text
//! F~_c(n) = Σ_p M_cp Q_p(n-1)          Q~_p(n) = 1 / Σ_c M_cp / F_c(n-1)
//! F_c(n)  = F~_c(n) / <F~(n)>_c        Q_p(n)  = Q~_p(n) / <Q~(n)>_p
//! ```
//!
//! starting from `F = Q = 1`. Complexities of poorly ranked products decay towards
//! zero without bound, so by default both updates run in the log domain with
//! log-sum-exp; orderings among vanishing values are then kept instead of
//! collapsing onto an exact-zero tie. Iteration stops once the joint ordering of
//! countries and products (by value, then index) has not changed for
//! `stable_iterations` consecutive steps.

use log::warn;
use serde::{Deserialize, Serialize};

use super::{BinaryMatrix, MetricsError};
use crate::stats::log_sum_exp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceConfig {
    pub stable_iterations: usize,
    pub max_iterations: usize,
    pub log_domain: bool,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            stable_iterations: 100,
            max_iterations: 100_000,
            log_domain: true,
        }
    }
}

impl ConvergenceConfig {
    /// Runs exactly `n` map applications (the stability criterion can never trigger).
    pub fn fixed_iterations(n: usize, log_domain: bool) -> Self {
        Self {
            stable_iterations: n,
            max_iterations: n,
            log_domain,
        }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.stable_iterations == 0 || self.stable_iterations > self.max_iterations {
            return Err(MetricsError::InvalidConfig(format!(
                "need 1 <= stable_iterations ({}) <= max_iterations ({})",
                self.stable_iterations, self.max_iterations
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcDiagnostics {
    pub iterations: usize,
    pub stabilized: bool,
    pub log_domain: bool,
    /// Countries with an all-zero row, excluded from the map.
    pub pruned_countries: Vec<usize>,
    /// Products with an all-zero column, excluded from the map.
    pub pruned_products: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitnessComplexity {
    /// Natural log of Fitness, `None` for pruned countries.
    pub ln_fitness: Vec<Option<f64>>,
    /// Natural log of Complexity, `None` for pruned products. May be very negative.
    pub ln_complexity: Vec<Option<f64>>,
    pub diagnostics: FcDiagnostics,
}

impl FitnessComplexity {
    pub fn fitness(&self) -> Vec<Option<f64>> {
        self.ln_fitness.iter().map(|v| v.map(f64::exp)).collect()
    }

    pub fn complexity(&self) -> Vec<Option<f64>> {
        self.ln_complexity.iter().map(|v| v.map(f64::exp)).collect()
    }

    /// Turns an unstabilized run into [`MetricsError::NotConverged`].
    pub fn require_converged(self) -> Result<Self, MetricsError> {
        if self.diagnostics.stabilized {
            Ok(self)
        } else {
            Err(MetricsError::NotConverged {
                iterations: self.diagnostics.iterations,
            })
        }
    }
}

struct Adjacency {
    /// products exported by each retained country (indices into retained products)
    by_country: Vec<Vec<usize>>,
    /// exporters of each retained product (indices into retained countries)
    by_product: Vec<Vec<usize>>,
}

fn adjacency(m: &BinaryMatrix, rows: &[usize], cols: &[usize]) -> Adjacency {
    let mut by_country = vec![Vec::new(); rows.len()];
    let mut by_product = vec![Vec::new(); cols.len()];
    for (ci, &c) in rows.iter().enumerate() {
        for (pi, &p) in cols.iter().enumerate() {
            if m.get(c, p) {
                by_country[ci].push(pi);
                by_product[pi].push(ci);
            }
        }
    }
    Adjacency { by_country, by_product }
}

fn ordering(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx
}

/// `ln` of the mean-normalized vector, given `ln` of the raw vector.
fn normalize_log(raw: &mut [f64]) {
    let ln_mean = log_sum_exp(raw.iter().copied()) - (raw.len() as f64).ln();
    for v in raw.iter_mut() {
        *v -= ln_mean;
    }
}

fn normalize_linear(raw: &mut [f64]) {
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    for v in raw.iter_mut() {
        *v /= mean;
    }
}

pub fn fitness_complexity(m: &BinaryMatrix, cfg: &ConvergenceConfig) -> Result<FitnessComplexity, MetricsError> {
    cfg.validate()?;
    let (n_c, n_p) = m.shape();
    let rows: Vec<usize> = (0..n_c).filter(|&c| (0..n_p).any(|p| m.get(c, p))).collect();
    let cols: Vec<usize> = (0..n_p).filter(|&p| (0..n_c).any(|c| m.get(c, p))).collect();
    if rows.is_empty() || cols.is_empty() {
        return Err(MetricsError::EmptyMatrix);
    }
    let pruned_countries: Vec<usize> = (0..n_c).filter(|c| !rows.contains(c)).collect();
    let pruned_products: Vec<usize> = (0..n_p).filter(|p| !cols.contains(p)).collect();
    if !pruned_countries.is_empty() || !pruned_products.is_empty() {
        warn!(
            "pruning {} empty rows and {} empty columns before fitness-complexity iteration",
            pruned_countries.len(),
            pruned_products.len()
        );
    }
    let adj = adjacency(m, &rows, &cols);

    let (f, q, iterations, stabilized) = if cfg.log_domain {
        iterate_log(&adj, cfg)
    } else {
        iterate_linear(&adj, cfg)
    };

    let mut ln_fitness = vec![None; n_c];
    for (i, &c) in rows.iter().enumerate() {
        ln_fitness[c] = Some(f[i]);
    }
    let mut ln_complexity = vec![None; n_p];
    for (i, &p) in cols.iter().enumerate() {
        ln_complexity[p] = Some(q[i]);
    }
    Ok(FitnessComplexity {
        ln_fitness,
        ln_complexity,
        diagnostics: FcDiagnostics {
            iterations,
            stabilized,
            log_domain: cfg.log_domain,
            pruned_countries,
            pruned_products,
        },
    })
}

struct Tracker {
    prev: Option<(Vec<usize>, Vec<usize>)>,
    stable: usize,
}

impl Tracker {
    fn observe(&mut self, f: &[f64], q: &[f64]) -> usize {
        let now = (ordering(f), ordering(q));
        if self.prev.as_ref() == Some(&now) {
            self.stable += 1;
        } else {
            self.stable = 0;
        }
        self.prev = Some(now);
        self.stable
    }
}

fn iterate_log(adj: &Adjacency, cfg: &ConvergenceConfig) -> (Vec<f64>, Vec<f64>, usize, bool) {
    let mut f = vec![0.0; adj.by_country.len()];
    let mut q = vec![0.0; adj.by_product.len()];
    let mut tracker = Tracker { prev: None, stable: 0 };
    for it in 1..=cfg.max_iterations {
        let mut f_new: Vec<f64> = adj
            .by_country
            .iter()
            .map(|ps| log_sum_exp(ps.iter().map(|&p| q[p])))
            .collect();
        let mut q_new: Vec<f64> = adj
            .by_product
            .iter()
            .map(|cs| -log_sum_exp(cs.iter().map(|&c| -f[c])))
            .collect();
        normalize_log(&mut f_new);
        normalize_log(&mut q_new);
        f = f_new;
        q = q_new;
        if tracker.observe(&f, &q) >= cfg.stable_iterations {
            return (f, q, it, true);
        }
    }
    (f, q, cfg.max_iterations, false)
}

fn iterate_linear(adj: &Adjacency, cfg: &ConvergenceConfig) -> (Vec<f64>, Vec<f64>, usize, bool) {
    let mut f = vec![1.0; adj.by_country.len()];
    let mut q = vec![1.0; adj.by_product.len()];
    let mut tracker = Tracker { prev: None, stable: 0 };
    let mut done = (cfg.max_iterations, false);
    for it in 1..=cfg.max_iterations {
        let mut f_new: Vec<f64> = adj.by_country.iter().map(|ps| ps.iter().map(|&p| q[p]).sum()).collect();
        let mut q_new: Vec<f64> = adj
            .by_product
            .iter()
            .map(|cs| 1.0 / cs.iter().map(|&c| 1.0 / f[c]).sum::<f64>())
            .collect();
        normalize_linear(&mut f_new);
        normalize_linear(&mut q_new);
        f = f_new;
        q = q_new;
        if tracker.observe(&f, &q) >= cfg.stable_iterations {
            done = (it, true);
            break;
        }
    }
    let ln = |v: Vec<f64>| v.into_iter().map(f64::ln).collect();
    (ln(f), ln(q), done.0, done.1)
}

/// Un-normalized complexity update `ln Q~_p = -ln Σ_c M_cp / F_c` evaluated at the given
/// log-fitness. By construction `Q~_p` never exceeds the smallest Fitness among the
/// exporters of `p`.
pub fn raw_complexity(m: &BinaryMatrix, ln_fitness: &[Option<f64>]) -> Vec<Option<f64>> {
    let (n_c, n_p) = m.shape();
    (0..n_p)
        .map(|p| {
            let terms: Vec<f64> = (0..n_c)
                .filter(|&c| m.get(c, p))
                .filter_map(|c| ln_fitness[c].map(|f| -f))
                .collect();
            if terms.is_empty() {
                None
            } else {
                Some(-log_sum_exp(terms.iter().copied()))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nested4() -> BinaryMatrix {
        BinaryMatrix::from_rows(&[&[1, 1, 1, 1], &[1, 1, 1, 0], &[1, 1, 0, 0], &[1, 0, 0, 0]])
    }

    #[test]
    fn all_ones_is_symmetric_fixed_point() {
        let m = BinaryMatrix::from_fn(5, 7, |_, _| true);
        for log_domain in [true, false] {
            let cfg = ConvergenceConfig {
                log_domain,
                ..Default::default()
            };
            let r = fitness_complexity(&m, &cfg).unwrap();
            assert!(r.diagnostics.stabilized);
            for v in r.fitness().into_iter().chain(r.complexity()) {
                assert!((v.unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nested_ranking_order() {
        let r = fitness_complexity(&nested4(), &ConvergenceConfig::default()).unwrap();
        let f: Vec<f64> = r.ln_fitness.iter().map(|v| v.unwrap()).collect();
        let q: Vec<f64> = r.ln_complexity.iter().map(|v| v.unwrap()).collect();
        assert!(f[0] > f[1] && f[1] > f[2] && f[2] > f[3]);
        // the product exported only by the most diversified country is the most complex
        assert!(q[3] > q[2] && q[2] > q[1] && q[1] > q[0]);
    }

    #[test]
    fn two_by_two_diversified_country_wins() {
        let m = BinaryMatrix::from_rows(&[&[1, 1], &[1, 0]]);
        let r = fitness_complexity(&m, &ConvergenceConfig::default()).unwrap();
        assert!(r.ln_fitness[0] > r.ln_fitness[1]);
        assert!(r.ln_complexity[1] > r.ln_complexity[0]);
    }

    #[test]
    fn empty_rows_pruned_and_marked_missing() {
        let m = BinaryMatrix::from_rows(&[&[1, 1, 0], &[0, 0, 0], &[1, 0, 0]]);
        let r = fitness_complexity(&m, &ConvergenceConfig::default()).unwrap();
        assert_eq!(r.diagnostics.pruned_countries, vec![1]);
        assert_eq!(r.diagnostics.pruned_products, vec![2]);
        assert!(r.ln_fitness[1].is_none());
        assert!(r.ln_complexity[2].is_none());
        let mean: f64 = r.fitness().iter().flatten().sum::<f64>() / 2.0;
        assert!((mean - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unstable_run_is_flagged() {
        // the first iterate has no predecessor, so n iterations can never show n stable steps
        let r = fitness_complexity(&nested4(), &ConvergenceConfig::fixed_iterations(5, true)).unwrap();
        assert_eq!(r.diagnostics.iterations, 5);
        assert!(!r.diagnostics.stabilized);
        assert!(matches!(
            r.require_converged(),
            Err(MetricsError::NotConverged { iterations: 5 })
        ));
    }

    #[test]
    fn invalid_config() {
        let cfg = ConvergenceConfig {
            stable_iterations: 0,
            ..Default::default()
        };
        assert!(fitness_complexity(&nested4(), &cfg).is_err());
    }

    #[test]
    fn raw_complexity_bounded_by_weakest_exporter() {
        let m = BinaryMatrix::from_rows(&[
            &[1, 0, 1, 1],
            &[1, 0, 1, 1],
            &[1, 1, 0, 1],
            &[1, 1, 1, 1],
            &[0, 1, 0, 0],
        ]);
        let r = fitness_complexity(&m, &ConvergenceConfig::default()).unwrap();
        let raw = raw_complexity(&m, &r.ln_fitness);
        for p in 0..4 {
            let min_f = (0..5)
                .filter(|&c| m.get(c, p))
                .map(|c| r.ln_fitness[c].unwrap())
                .fold(f64::INFINITY, f64::min);
            assert!(raw[p].unwrap() <= min_f + 1e-12);
        }
    }
}

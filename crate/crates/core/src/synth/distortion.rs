use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::plane::tied_rank;
use crate::stats::welch_greater;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepDistribution {
    Gaussian {
        sd: f64,
    },
    /// The same deterministic step for every entity.
    Constant {
        step: f64,
    },
    Uniform {
        half_width: f64,
    },
}

impl StepDistribution {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            StepDistribution::Gaussian { sd } => sd * rng.sample::<f64, _>(StandardNormal),
            StepDistribution::Constant { step } => step,
            StepDistribution::Uniform { half_width } => rng.random_range(-half_width..=half_width),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistortionConfig {
    pub n_entities: usize,
    pub n_steps: usize,
    pub step: StepDistribution,
    pub seed: u64,
    pub n_bins: usize,
}

impl Default for DistortionConfig {
    fn default() -> Self {
        Self {
            n_entities: 500,
            n_steps: 100,
            step: StepDistribution::Gaussian { sd: 0.1 },
            seed: 0,
            n_bins: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionBin {
    pub rank_low: f64,
    pub rank_high: f64,
    pub mean_abs: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub bins: Vec<DistortionBin>,
    pub edge_mean: f64,
    pub central_mean: f64,
    /// One-sided Welch test of edge bins exceeding central bins.
    pub t_statistic: f64,
    pub p_value: f64,
    /// Every `(entity, step)` pair: start rank and signed distortion.
    #[serde(skip)]
    pub samples: Vec<(f64, f64)>,
}

fn unit_ranks(v: &[f64]) -> Vec<f64> {
    let opt: Vec<Option<f64>> = v.iter().map(|x| Some(*x)).collect();
    tied_rank(&opt)
        .expect("at least two entities")
        .into_iter()
        .map(Option::unwrap)
        .collect()
}

/// `(start rank, distortion)` for every entity and step of value paths `paths[t][e]`.
pub fn distortion_samples(paths: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let mut samples = Vec::new();
    let mut ranks = unit_ranks(&paths[0]);
    for w in paths.windows(2) {
        let next_ranks = unit_ranks(&w[1]);
        let dv: Vec<f64> = w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect();
        let dr: Vec<f64> = next_ranks.iter().zip(&ranks).map(|(a, b)| a - b).collect();
        let svv: f64 = dv.iter().map(|x| x * x).sum();
        let s = if svv > 0.0 {
            dr.iter().zip(&dv).map(|(a, b)| a * b).sum::<f64>() / svv
        } else {
            0.0
        };
        for e in 0..dv.len() {
            samples.push((ranks[e], dr[e] - s * dv[e]));
        }
        ranks = next_ranks;
    }
    samples
}

/// Random-walk values re-ranked every step.
///
/// Values start from a standard normal and take i.i.d. steps. For each step the rank
/// displacement of an entity is compared with its value displacement scaled by the
/// least-squares factor `s = ΣΔrΔv / ΣΔv²` of that step; the residual `Δr - sΔv` is the
/// distortion, binned by the entity's starting rank. The outer bins (first and last)
/// are tested against the two central bins.
pub fn ranking_distortion_study(cfg: &DistortionConfig) -> Result<DistortionReport, SynthError> {
    if cfg.n_entities < 10 || cfg.n_steps < 2 {
        return Err(SynthError::InvalidModel(
            "need n_entities >= 10 and n_steps >= 2".into(),
        ));
    }
    if cfg.n_bins < 4 || !cfg.n_bins.is_multiple_of(2) {
        return Err(SynthError::InvalidModel("n_bins must be even and at least 4".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut paths = Vec::with_capacity(cfg.n_steps + 1);
    paths.push(
        (0..cfg.n_entities)
            .map(|_| rng.sample(StandardNormal))
            .collect::<Vec<f64>>(),
    );
    for t in 0..cfg.n_steps {
        let next = paths[t].iter().map(|v| v + cfg.step.draw(&mut rng)).collect();
        paths.push(next);
    }
    let samples = distortion_samples(&paths);
    let nb = cfg.n_bins;
    let bin_of = |r: f64| ((r * nb as f64).floor() as usize).min(nb - 1);
    let mut per_bin: Vec<Vec<f64>> = vec![Vec::new(); nb];
    for &(r, d) in &samples {
        per_bin[bin_of(r)].push(d.abs());
    }
    let bins = per_bin
        .iter()
        .enumerate()
        .map(|(b, v)| DistortionBin {
            rank_low: b as f64 / nb as f64,
            rank_high: (b + 1) as f64 / nb as f64,
            mean_abs: if v.is_empty() {
                f64::NAN
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            },
            count: v.len(),
        })
        .collect();
    let edge: Vec<f64> = per_bin[0].iter().chain(&per_bin[nb - 1]).copied().collect();
    let central: Vec<f64> = per_bin[nb / 2 - 1].iter().chain(&per_bin[nb / 2]).copied().collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let (t, p) = welch_greater(&edge, &central).unwrap_or((0.0, 1.0));
    Ok(DistortionReport {
        bins,
        edge_mean: mean(&edge),
        central_mean: mean(&central),
        t_statistic: t,
        p_value: p,
        samples,
    })
}

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::fields::Sample;
use crate::plane::{PlaneData, PlanePoint};

/// Analytic potential on the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    /// `a (y - m(x))² + b (x - x0)²` around the valley line
    /// `m(x) = m0 + m1 (x - sin(2πx) / 2π)`, which is flat at both ends of the x range.
    Valley { a: f64, m0: f64, m1: f64, b: f64, x0: f64 },
    /// `ax (x - x0)² + ay (y - y0)²`.
    Bowl { ax: f64, ay: f64, x0: f64, y0: f64 },
}

impl Default for Surface {
    fn default() -> Self {
        Surface::Valley {
            a: 0.25,
            m0: 0.25,
            m1: 0.5,
            b: 0.0,
            x0: 0.5,
        }
    }
}

impl Surface {
    pub fn valley_line(&self, x: f64) -> f64 {
        match *self {
            Surface::Valley { m0, m1, .. } => m0 + m1 * (x - (2.0 * PI * x).sin() / (2.0 * PI)),
            Surface::Bowl { y0, .. } => y0,
        }
    }

    pub fn h(&self, x: f64, y: f64) -> f64 {
        match *self {
            Surface::Valley { a, b, x0, .. } => a * (y - self.valley_line(x)).powi(2) + b * (x - x0).powi(2),
            Surface::Bowl { ax, ay, x0, y0 } => ax * (x - x0).powi(2) + ay * (y - y0).powi(2),
        }
    }

    pub fn grad(&self, x: f64, y: f64) -> (f64, f64) {
        match *self {
            Surface::Valley { a, m1, b, x0, .. } => {
                let d = y - self.valley_line(x);
                let slope = m1 * (1.0 - (2.0 * PI * x).cos());
                (-2.0 * a * d * slope + 2.0 * b * (x - x0), 2.0 * a * d)
            }
            Surface::Bowl { ax, ay, x0, y0 } => (2.0 * ax * (x - x0), 2.0 * ay * (y - y0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    Uniform,
    Points(Vec<(f64, f64)>),
}

/// Products descending a potential: `r(t+1) = reflect(r(t) - k ∘ ∇H(r(t)) + σ ∘ ξ)`
/// with standard normal `ξ` and reflection at the edges of the unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedDynamics {
    pub surface: Surface,
    pub k: [f64; 2],
    /// Noise standard deviation per axis.
    pub noise: [f64; 2],
    pub n_products: usize,
    pub n_years: usize,
    /// Unrecorded steps before the first emitted year.
    pub burn_in: usize,
    pub first_year: i32,
    pub seed: u64,
    pub start: Start,
}

impl Default for PlantedDynamics {
    fn default() -> Self {
        Self {
            surface: Surface::default(),
            k: [0.5, 1.0],
            noise: [0.01, 0.01],
            n_products: 500,
            n_years: 20,
            burn_in: 0,
            first_year: 2000,
            seed: 0,
            start: Start::Uniform,
        }
    }
}

/// Folds a coordinate back into `[0, 1]` by mirror reflection at both edges.
pub fn reflect(z: f64) -> f64 {
    let m = z.rem_euclid(2.0);
    if m > 1.0 {
        2.0 - m
    } else {
        m
    }
}

#[derive(Debug, Clone)]
pub struct PlantedRun {
    pub data: PlaneData,
    pub surface: Surface,
    /// Steps in which at least one coordinate was reflected at an edge.
    pub reflections: usize,
}

impl PlantedRun {
    /// Every recorded point carrying `H` at its position.
    pub fn h_samples(&self) -> Vec<Sample> {
        self.data
            .all_points()
            .map(|p| Sample::scalar(p.x, p.y, self.surface.h(p.x, p.y)))
            .collect()
    }

    /// Velocity (displacement per year) at the start of each displacement of `lag`.
    pub fn velocity_samples(&self, lag: u32) -> Vec<Sample> {
        self.data.displacements.get(&lag).map_or_else(Vec::new, |d| {
            d.iter()
                .map(|d| Sample::vector(d.start.x, d.start.y, d.dx / lag as f64, d.dy / lag as f64))
                .collect()
        })
    }

    /// Analytic `∇H` at the start of each displacement of `lag`.
    pub fn gradient_samples(&self, lag: u32) -> Vec<Sample> {
        self.data.displacements.get(&lag).map_or_else(Vec::new, |d| {
            d.iter()
                .map(|d| {
                    let (gx, gy) = self.surface.grad(d.start.x, d.start.y);
                    Sample::vector(d.start.x, d.start.y, gx, gy)
                })
                .collect()
        })
    }
}

pub fn planted_trajectories(dynamics: &PlantedDynamics, lags: &[u32]) -> Result<PlantedRun, SynthError> {
    let d = dynamics;
    if d.n_years < 2 {
        return Err(SynthError::InvalidModel("need at least 2 years".into()));
    }
    if d.noise.iter().any(|s| !(*s >= 0.0)) {
        return Err(SynthError::InvalidModel("noise must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(d.seed);
    let mut pos: Vec<(f64, f64)> = match &d.start {
        Start::Uniform => (0..d.n_products).map(|_| (rng.random(), rng.random())).collect(),
        Start::Points(p) => {
            if p.iter()
                .any(|&(x, y)| !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y))
            {
                return Err(SynthError::InvalidModel(
                    "start points must lie in the unit square".into(),
                ));
            }
            p.clone()
        }
    };
    let n = pos.len();
    let mut reflections = 0;
    let mut points = Vec::with_capacity(d.n_years);
    for step in 0..d.burn_in + d.n_years {
        if step >= d.burn_in {
            let year = d.first_year + (step - d.burn_in) as i32;
            let pts = pos
                .iter()
                .enumerate()
                .map(|(p, &(x, y))| PlanePoint { product: p, year, x, y })
                .collect();
            points.push((year, pts));
            if step + 1 == d.burn_in + d.n_years {
                break;
            }
        }
        for (x, y) in pos.iter_mut() {
            let (gx, gy) = d.surface.grad(*x, *y);
            let zx: f64 = rng.sample(StandardNormal);
            let zy: f64 = rng.sample(StandardNormal);
            let nx = *x - d.k[0] * gx + d.noise[0] * zx;
            let ny = *y - d.k[1] * gy + d.noise[1] * zy;
            if !(0.0..=1.0).contains(&nx) || !(0.0..=1.0).contains(&ny) {
                reflections += 1;
            }
            *x = reflect(nx);
            *y = reflect(ny);
        }
    }
    let products = (0..n).map(|p| format!("S{p:05}")).collect();
    let data = PlaneData::from_points(products, points, lags).map_err(|e| SynthError::InvalidModel(e.to_string()))?;
    Ok(PlantedRun {
        data,
        surface: d.surface,
        reflections,
    })
}

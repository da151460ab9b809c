use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::BinaryMatrix;

/// Row-major bitset rows of a binary matrix.
struct BitRows {
    words: usize,
    bits: Vec<u64>,
    degree: Vec<u32>,
}

impl BitRows {
    fn new(n: usize, m: usize, cell: impl Fn(usize, usize) -> bool) -> Self {
        let words = m.div_ceil(64);
        let mut bits = vec![0u64; n * words];
        let mut degree = vec![0; n];
        for r in 0..n {
            for c in 0..m {
                if cell(r, c) {
                    bits[r * words + c / 64] |= 1 << (c % 64);
                    degree[r] += 1;
                }
            }
        }
        Self { words, bits, degree }
    }

    fn overlap(&self, a: usize, b: usize) -> u32 {
        let (ra, rb) = (&self.bits[a * self.words..], &self.bits[b * self.words..]);
        (0..self.words).map(|w| (ra[w] & rb[w]).count_ones()).sum()
    }

    /// Sum over row pairs of the paired-overlap score, plus the number of pairs.
    fn paired_sum(&self) -> (f64, usize) {
        let n = self.degree.len();
        let mut sum = 0.0;
        for a in 0..n {
            for b in a + 1..n {
                let (da, db) = (self.degree[a], self.degree[b]);
                if da == db || da.min(db) == 0 {
                    continue;
                }
                sum += 100.0 * self.overlap(a, b) as f64 / da.min(db) as f64;
            }
        }
        (sum, n * n.saturating_sub(1) / 2)
    }
}

/// NODF nestedness in `[0, 100]`: mean over all row pairs and all column pairs of the
/// share of the sparser line's ones that the denser line also has (0 for equal degrees).
pub fn nodf(m: &BinaryMatrix) -> f64 {
    let (n, k) = m.shape();
    let rows = BitRows::new(n, k, |r, c| m.get(r, c));
    let cols = BitRows::new(k, n, |c, r| m.get(r, c));
    let (sr, pr) = rows.paired_sum();
    let (sc, pc) = cols.paired_sum();
    if pr + pc == 0 {
        0.0
    } else {
        (sr + sc) / (pr + pc) as f64
    }
}

/// Degree-preserving randomization by checkerboard swaps (`10 × nnz` attempts).
pub fn degree_preserving_null(m: &BinaryMatrix, rng: &mut impl Rng) -> BinaryMatrix {
    let mut out = m.clone();
    let (n, k) = m.shape();
    let mut edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|r| (0..k).map(move |c| (r, c)))
        .filter(|&(r, c)| m.get(r, c))
        .collect();
    if edges.len() < 2 {
        return out;
    }
    for _ in 0..10 * edges.len() {
        let a = rng.random_range(0..edges.len());
        let b = rng.random_range(0..edges.len());
        let ((r1, c1), (r2, c2)) = (edges[a], edges[b]);
        if r1 == r2 || c1 == c2 || out.cells[[r1, c2]] || out.cells[[r2, c1]] {
            continue;
        }
        out.cells[[r1, c1]] = false;
        out.cells[[r2, c2]] = false;
        out.cells[[r1, c2]] = true;
        out.cells[[r2, c1]] = true;
        edges[a] = (r1, c2);
        edges[b] = (r2, c1);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestednessReport {
    pub nodf: f64,
    pub null_mean: f64,
    pub null_sd: f64,
    pub null_draws: usize,
    /// Share of null draws strictly less nested than the observed matrix.
    pub exceeds_fraction: f64,
}

/// Compares the NODF of `m` with `n_null` degree-preserving randomizations.
pub fn nestedness_test(m: &BinaryMatrix, n_null: usize, seed: u64) -> NestednessReport {
    let observed = nodf(m);
    let null: Vec<f64> = (0..n_null)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64 + 1);
            nodf(&degree_preserving_null(m, &mut rng))
        })
        .collect();
    let mean = null.iter().sum::<f64>() / n_null.max(1) as f64;
    let var = null.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n_null.saturating_sub(1).max(1) as f64;
    NestednessReport {
        nodf: observed,
        null_mean: mean,
        null_sd: var.sqrt(),
        null_draws: n_null,
        exceeds_fraction: null.iter().filter(|v| **v < observed).count() as f64 / n_null.max(1) as f64,
    }
}

//! Shared input generators for the benchmark targets.

use mosrank_core::rng::substream;
use rand::Rng;

/// Deterministic prediction/target pairs in the MOS range.
pub fn score_pairs(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = substream(seed, "bench");
    let yhat = (0..n).map(|_| rng.random_range(-1.0..6.0)).collect();
    let y = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
    (yhat, y)
}

/// Values quantized to a 1..5 scale with ties, as listening tests produce.
pub fn quantized(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, "bench-q");
    (0..n)
        .map(|_| (rng.random_range(8..=40) as f64) / 8.0)
        .collect()
}

//! Seeded workload generators shared by the benchmarks.

use clfmetrics::{ClassRegistry, ConfusionMatrix, ProbRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn registry(k: usize) -> ClassRegistry {
    ClassRegistry::new((0..k).map(|i| format!("class{i:03}"))).expect("distinct labels")
}

/// `n` index pairs over `k` classes; roughly `hit_rate` of them correct.
pub fn index_pairs(k: usize, n: usize, hit_rate: f64, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let a = rng.gen_range(0..k);
            let p = if rng.gen_bool(hit_rate) {
                a
            } else {
                rng.gen_range(0..k)
            };
            (a, p)
        })
        .collect()
}

/// The same pairs as string labels.
pub fn label_pairs(k: usize, n: usize, seed: u64) -> Vec<(String, String)> {
    let reg = registry(k);
    index_pairs(k, n, 0.7, seed)
        .into_iter()
        .map(|(a, p)| (reg.labels()[a].clone(), reg.labels()[p].clone()))
        .collect()
}

pub fn random_matrix(k: usize, max_count: u64, seed: u64) -> ConfusionMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<u64>> = (0..k)
        .map(|_| (0..k).map(|_| rng.gen_range(0..=max_count)).collect())
        .collect();
    ConfusionMatrix::from_counts(registry(k), &rows).expect("square and small")
}

/// Normalized random probability rows.
pub fn prob_records(k: usize, n: usize, seed: u64) -> Vec<ProbRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.001..1.0)).collect();
            let total: f64 = w.iter().sum();
            let probs = w.into_iter().map(|x| x / total).collect();
            ProbRecord::new(rng.gen_range(0..k), probs).expect("valid row")
        })
        .collect()
}

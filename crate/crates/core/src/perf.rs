//! Similarity throughput probe shared by the benchmark and the acceptance
//! suite.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::pattern_bank::normalize;
use crate::regress::score_normalized_bank;

/// Normalized random vectors, row-major.
pub fn random_normalized_rows(rows: usize, m: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rows)
        .flat_map(|_| {
            let v: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            normalize(&v).values
        })
        .collect()
}

/// Scores every query against every bank row, queries in parallel. Returns
/// a checksum of all similarities.
pub fn score_all(queries: &[f64], bank: &[f64], m: usize) -> f64 {
    let rows = bank.len() / m;
    queries
        .par_chunks_exact(m)
        .map_init(
            || vec![0.0; rows],
            |out, q| {
                score_normalized_bank(q, bank, out);
                out.iter().sum::<f64>()
            },
        )
        .sum()
}

#[derive(Debug, Clone, Copy)]
pub struct Throughput {
    pub evaluations: usize,
    pub seconds: f64,
    pub checksum: f64,
}

impl Throughput {
    pub fn per_second(&self) -> f64 {
        self.evaluations as f64 / self.seconds
    }
}

/// Times `queries * bank_rows` similarity evaluations of dimension `m`.
pub fn measure_similarity_throughput(
    m: usize,
    bank_rows: usize,
    queries: usize,
    seed: u64,
) -> Throughput {
    let bank = random_normalized_rows(bank_rows, m, seed);
    let qs = random_normalized_rows(queries, m, seed.wrapping_add(1));
    // warm the thread pool and caches
    let _ = score_all(&qs[..m], &bank, m);
    let start = Instant::now();
    let checksum = score_all(&qs, &bank, m);
    Throughput {
        evaluations: queries * bank_rows,
        seconds: start.elapsed().as_secs_f64(),
        checksum,
    }
}

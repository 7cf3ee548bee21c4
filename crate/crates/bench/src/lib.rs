//! Benchmark fixtures.

use lst_core::pattern_bank::Pattern;
use lst_core::perf::random_normalized_rows;

/// `n` random windows of length `m`, labels alternating in sign.
pub fn random_patterns(n: usize, m: usize, seed: u64) -> Vec<Pattern> {
    random_normalized_rows(n, m, seed)
        .chunks_exact(m)
        .enumerate()
        .map(|(i, row)| Pattern::new(row.to_vec(), if i % 2 == 0 { 1.0 } else { -1.0 }))
        .collect()
}

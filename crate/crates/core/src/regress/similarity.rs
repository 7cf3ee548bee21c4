use rayon::prelude::*;

use crate::error::{Error, Result};

/// Correlation of two windows: centered cross products over `M` times the
/// product of the population standard deviations. A constant argument gives
/// 0.
pub fn similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let n = a.len() as f64;
    if a.is_empty() {
        return Ok(0.0);
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cross, mut ssa, mut ssb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (da, db) = (x - ma, y - mb);
        cross += da * db;
        ssa += da * da;
        ssb += db * db;
    }
    // M * std(a) * std(b) == sqrt(ssa * ssb)
    let denom = (ssa * ssb).sqrt();
    if !(denom > 0.0) || is_flat(ssa, a) || is_flat(ssb, b) {
        return Ok(0.0);
    }
    Ok((cross / denom).clamp(-1.0, 1.0))
}

fn is_flat(ss: f64, v: &[f64]) -> bool {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = f64::EPSILON * scale;
    !(ss > v.len() as f64 * floor * floor)
}

/// Similarity of two already normalized vectors: their inner product over
/// `M`.
#[inline]
pub fn dot_similarity(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // four accumulators let the compiler vectorize the reduction
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4 * 4;
    for (ca, cb) in a[..chunks].chunks_exact(4).zip(b[..chunks].chunks_exact(4)) {
        for l in 0..4 {
            acc[l] += ca[l] * cb[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in a[chunks..].iter().zip(&b[chunks..]) {
        tail += x * y;
    }
    (acc[0] + acc[1] + acc[2] + acc[3] + tail) / a.len() as f64
}

/// Similarity of a normalized query against each row of a row-major block of
/// normalized vectors. Large blocks are scored in parallel.
pub fn score_normalized_bank(query: &[f64], rows: &[f64], out: &mut [f64]) {
    let m = query.len();
    debug_assert_eq!(rows.len(), m * out.len());
    const PAR_MIN_ROWS: usize = 4096;
    if out.len() >= PAR_MIN_ROWS {
        out.par_iter_mut()
            .zip(rows.par_chunks_exact(m))
            .for_each(|(o, row)| *o = dot_similarity(query, row));
    } else {
        for (o, row) in out.iter_mut().zip(rows.chunks_exact(m)) {
            *o = dot_similarity(query, row);
        }
    }
}

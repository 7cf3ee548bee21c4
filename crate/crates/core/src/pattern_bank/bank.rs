use std::fs;
use std::path::Path;

use log::debug;
use serde::{Deserialize, Serialize};

use super::{extract_windows, kmeans, normalize, ClusterSet, WINDOW_LENGTHS};
use crate::error::{Error, Result};
use crate::market_data::PriceSeries;

const SCORE_EPS: f64 = 1e-9;
const BINARY_MAGIC: &[u8; 4] = b"LSTB";
const BINARY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Representative {
    pub cluster: usize,
    pub vector: Vec<f64>,
    pub label: f64,
    pub population: usize,
    pub score: f64,
}

fn effectiveness(mean: f64, std: f64) -> f64 {
    mean.abs() / (std + SCORE_EPS)
}

/// Picks the `m` clusters whose member labels are large and consistent,
/// scored by `|label mean| / (label std + 1e-9)`.
///
/// Ties go to the larger cluster, then the lower cluster id. Each
/// representative is the cluster centroid re-normalized, labeled with the
/// members' mean label.
pub fn select_effective(clusters: &ClusterSet, m: usize) -> Result<Vec<Representative>> {
    if m > clusters.k {
        return Err(Error::InvalidArgument(format!(
            "cannot select {m} of {} clusters",
            clusters.k
        )));
    }
    let mut order: Vec<(usize, f64)> = (0..clusters.k)
        .map(|j| {
            (
                j,
                effectiveness(clusters.label_mean[j], clusters.label_std[j]),
            )
        })
        .collect();
    order.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then(clusters.populations[b.0].cmp(&clusters.populations[a.0]))
            .then(a.0.cmp(&b.0))
    });
    Ok(order
        .into_iter()
        .take(m)
        .map(|(j, score)| Representative {
            cluster: j,
            vector: normalize(&clusters.centroids[j]).values,
            label: clusters.label_mean[j],
            population: clusters.populations[j],
            score,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankEntry {
    pub vector: Vec<f64>,
    pub label: f64,
    pub population: usize,
}

/// Support set of the kernel estimator for one window length.
///
/// Entries are kept as given; a normalized copy of each vector is cached for
/// similarity scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternBank {
    window_length: usize,
    entries: Vec<BankEntry>,
    kernel_c: f64,
    normalized: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BankFile {
    window_length: usize,
    kernel_c: f64,
    patterns: Vec<BankEntry>,
}

impl PatternBank {
    pub fn new(window_length: usize, entries: Vec<BankEntry>, kernel_c: f64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidArgument(
                "pattern bank must not be empty".into(),
            ));
        }
        if let Some(e) = entries.iter().find(|e| e.vector.len() != window_length) {
            return Err(Error::DimensionMismatch {
                expected: window_length,
                actual: e.vector.len(),
            });
        }
        if !(kernel_c > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "kernel constant {kernel_c} must be positive"
            )));
        }
        let normalized = entries
            .iter()
            .flat_map(|e| normalize(&e.vector).values)
            .collect();
        Ok(Self {
            window_length,
            entries,
            kernel_c,
            normalized,
        })
    }

    /// Bank over raw labeled vectors with a unit kernel constant.
    pub fn from_labeled(vectors: Vec<Vec<f64>>, labels: &[f64]) -> Result<Self> {
        if vectors.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: vectors.len(),
                actual: labels.len(),
            });
        }
        let dim = vectors.first().map_or(0, Vec::len);
        let entries = vectors
            .into_iter()
            .zip(labels)
            .map(|(vector, &label)| BankEntry {
                vector,
                label,
                population: 1,
            })
            .collect();
        Self::new(dim, entries, 1.0)
    }

    pub fn from_representatives(window_length: usize, reps: Vec<Representative>) -> Result<Self> {
        let entries = reps
            .into_iter()
            .map(|r| BankEntry {
                vector: r.vector,
                label: r.label,
                population: r.population,
            })
            .collect();
        Self::new(window_length, entries, 1.0)
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[BankEntry] {
        &self.entries
    }

    pub fn labels(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.label)
    }

    pub fn kernel_c(&self) -> f64 {
        self.kernel_c
    }

    pub fn set_kernel_c(&mut self, c: f64) {
        self.kernel_c = c;
    }

    /// Zero-mean unit-std copy of entry `i`.
    pub fn normalized(&self, i: usize) -> &[f64] {
        let m = self.window_length;
        &self.normalized[i * m..(i + 1) * m]
    }

    /// All normalized vectors, row-major.
    pub fn normalized_rows(&self) -> &[f64] {
        &self.normalized
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&BankFile {
            window_length: self.window_length,
            kernel_c: self.kernel_c,
            patterns: self.entries.clone(),
        })
        .expect("bank serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Result<Self>> {
        let f: BankFile = serde_json::from_str(text)?;
        Ok(Self::new(f.window_length, f.patterns, f.kernel_c))
    }

    /// Little-endian binary form: magic `LSTB`, u32 version, u64 window
    /// length, f64 kernel constant, u64 entry count, then per entry f64
    /// label, u64 population and `window_length` f64 values.
    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.len() * (16 + 8 * self.window_length));
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.window_length as u64).to_le_bytes());
        out.extend_from_slice(&self.kernel_c.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&e.label.to_le_bytes());
            out.extend_from_slice(&(e.population as u64).to_le_bytes());
            for v in &e.vector {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(Error::InvalidArgument("truncated binary bank".into()));
            }
            let (head, tail) = cur.split_at(n);
            cur = tail;
            Ok(head)
        };
        if take(4)? != BINARY_MAGIC {
            return Err(Error::InvalidArgument("not a binary pattern bank".into()));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != BINARY_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported bank version {version}"
            )));
        }
        let u64_at = |b: &[u8]| u64::from_le_bytes(b.try_into().unwrap());
        let f64_at = |b: &[u8]| f64::from_le_bytes(b.try_into().unwrap());
        let window_length = u64_at(take(8)?) as usize;
        let kernel_c = f64_at(take(8)?);
        let count = u64_at(take(8)?) as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let label = f64_at(take(8)?);
            let population = u64_at(take(8)?) as usize;
            let raw = take(8 * window_length)?;
            let vector = raw.chunks_exact(8).map(f64_at).collect();
            entries.push(BankEntry {
                vector,
                label,
                population,
            });
        }
        Self::new(window_length, entries, kernel_c)
    }

    /// Writes JSON, or the binary form when the extension is `.bin`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = if path.extension().is_some_and(|e| e == "bin") {
            self.to_binary()
        } else {
            self.to_json().into_bytes()
        };
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(BINARY_MAGIC) {
            return Self::from_binary(&bytes);
        }
        let text = String::from_utf8(bytes)
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::json(path, e))?
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BankConfig {
    pub windows: [usize; 3],
    pub k: usize,
    pub m: usize,
    pub stride: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self {
            windows: WINDOW_LENGTHS,
            k: 100,
            m: 20,
            stride: 1,
            max_iters: 100,
            seed: 0,
        }
    }
}

fn bank_seed(seed: u64, index: usize) -> u64 {
    seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index as u64 + 1))
}

/// Builds the three banks from a training series: windows of each length
/// are clustered with `k` clamped to `max(1, min(k, n / 2))` for `n`
/// windows, and the `min(m, k)` most effective clusters are kept.
pub fn build_banks(series: &PriceSeries, config: &BankConfig) -> Result<Vec<PatternBank>> {
    let longest = config.windows.iter().copied().max().unwrap_or(0);
    if series.len() < longest + 1 {
        return Err(Error::SeriesTooShort {
            needed: longest + 1,
            available: series.len(),
        });
    }
    config
        .windows
        .iter()
        .enumerate()
        .map(|(j, &window)| {
            let patterns = extract_windows(series, window, config.stride)?;
            let k = config.k.min(patterns.len() / 2).max(1);
            let m = config.m.min(k);
            let clusters = kmeans(&patterns, k, bank_seed(config.seed, j), config.max_iters)?;
            debug!(
                "bank {}: {} windows, k = {k}, {} iterations, objective {:.4}",
                j + 1,
                patterns.len(),
                clusters.iterations,
                clusters.objective()
            );
            let reps = select_effective(&clusters, m)?;
            PatternBank::from_representatives(window, reps)
        })
        .collect()
}

use std::ops::Range;

use rayon::prelude::*;

use super::combiner::{fit_weights, predict_dp, WeightFit};
use super::kernel::{log_scores, softmax, weighted_label, KernelChoice, KernelVariant};
use crate::error::{Error, Result};
use crate::market_data::PriceSeries;
use crate::pattern_bank::PatternBank;

pub const DEFAULT_C_GRID: [f64; 5] = [0.5, 1.0, 2.0, 4.0, 8.0];

/// Per-bank predictions `dp1..dp3` and the book imbalance at one bucket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Features {
    pub dp: [f64; 3],
    pub r: f64,
}

fn check_banks(banks: &[PatternBank]) -> Result<usize> {
    if banks.len() != 3 {
        return Err(Error::InvalidArgument(format!(
            "expected 3 pattern banks, got {}",
            banks.len()
        )));
    }
    Ok(banks.iter().map(PatternBank::window_length).max().unwrap())
}

/// Decision buckets that have a full window for every bank and a following
/// bucket: `longest - 1 .. len - 1`.
pub fn decision_range(series_len: usize, banks: &[PatternBank]) -> Result<Range<usize>> {
    let longest = check_banks(banks)?;
    if series_len < longest + 1 {
        return Err(Error::SeriesTooShort {
            needed: longest + 1,
            available: series_len,
        });
    }
    Ok(longest - 1..series_len - 1)
}

/// Features at bucket `t`. Window `j` is the `M_j` prices ending at and
/// including `t`, so `t >= M_j - 1` for every bank.
pub fn assemble_features(
    t: usize,
    series: &PriceSeries,
    banks: &[PatternBank],
    kernel: KernelChoice,
) -> Result<Features> {
    let longest = check_banks(banks)?;
    if t + 1 < longest {
        return Err(Error::InsufficientHistory {
            t,
            needed: longest - 1,
        });
    }
    if t >= series.len() {
        return Err(Error::InvalidArgument(format!(
            "bucket {t} is past the end of the series"
        )));
    }
    let mut dp = [0.0; 3];
    for (out, bank) in dp.iter_mut().zip(banks) {
        let m = bank.window_length();
        let window = &series.prices[t + 1 - m..=t];
        *out = weighted_label(&softmax(&log_scores(window, bank, kernel)?), bank);
    }
    Ok(Features {
        dp,
        r: series.imbalances[t],
    })
}

/// Kernel-independent scores for a run of decision buckets, so the kernel
/// constant can be swept without rescoring the windows.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    pub range: Range<usize>,
    variant: KernelVariant,
    bank_labels: Vec<Vec<f64>>,
    /// `[bank][t * bank_len + i]`: similarity (exp kernel) or log weight
    /// (gaussian kernel).
    scores: Vec<Vec<f64>>,
    pub imbalances: Vec<f64>,
    /// Realized `price[t + 1] - price[t]`.
    pub targets: Vec<f64>,
}

impl FeatureCache {
    pub fn build(
        series: &PriceSeries,
        banks: &[PatternBank],
        variant: KernelVariant,
        range: Range<usize>,
    ) -> Result<Self> {
        let longest = check_banks(banks)?;
        if range.start + 1 < longest {
            return Err(Error::InsufficientHistory {
                t: range.start,
                needed: longest - 1,
            });
        }
        if range.end + 1 > series.len() {
            return Err(Error::SeriesTooShort {
                needed: range.end + 1,
                available: series.len(),
            });
        }
        let unit = match variant {
            KernelVariant::GaussianL2 => KernelChoice::gaussian_l2(),
            KernelVariant::ExpSimilarity => KernelChoice::exp_similarity(1.0),
        };
        let scores = banks
            .iter()
            .map(|bank| {
                let m = bank.window_length();
                let rows: Vec<Vec<f64>> = range
                    .clone()
                    .into_par_iter()
                    .map(|t| log_scores(&series.prices[t + 1 - m..=t], bank, unit))
                    .collect::<Result<_>>()?;
                Ok(rows.concat())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            variant,
            bank_labels: banks.iter().map(|b| b.labels().collect()).collect(),
            scores,
            imbalances: series.imbalances[range.clone()].to_vec(),
            targets: range
                .clone()
                .map(|t| series.prices[t + 1] - series.prices[t])
                .collect(),
            range,
        })
    }

    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }

    /// Features for every cached bucket under kernel constant `c`.
    pub fn features(&self, c: f64) -> Vec<Features> {
        let scale = match self.variant {
            KernelVariant::GaussianL2 => 1.0,
            KernelVariant::ExpSimilarity => c,
        };
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                let mut dp = [0.0; 3];
                for (j, out) in dp.iter_mut().enumerate() {
                    let labels = &self.bank_labels[j];
                    let n = labels.len();
                    let logs: Vec<f64> = self.scores[j][i * n..(i + 1) * n]
                        .iter()
                        .map(|s| if scale == 1.0 { *s } else { s * scale })
                        .collect();
                    let w = softmax(&logs);
                    let (lo, hi) = labels
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
                            (lo.min(y), hi.max(y))
                        });
                    let y: f64 = w.iter().zip(labels).map(|(w, y)| w * y).sum();
                    *out = y.clamp(lo, hi);
                }
                Features {
                    dp,
                    r: self.imbalances[i],
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub c: f64,
    pub fit: WeightFit,
    pub mse: f64,
    /// In-sample mean squared error for each distinct grid value, ascending.
    pub grid_mse: Vec<(f64, f64)>,
}

/// Chooses the kernel constant with the lowest in-sample squared error of
/// the fitted combiner on `fit_series`; ties go to the smaller constant.
pub fn calibrate_c(
    grid: &[f64],
    fit_series: &PriceSeries,
    banks: &[PatternBank],
) -> Result<Calibration> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty kernel constant grid".into()));
    }
    if let Some(c) = grid.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "kernel constant {c} must be positive"
        )));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let range = decision_range(fit_series.len(), banks)?;
    let cache = FeatureCache::build(fit_series, banks, KernelVariant::ExpSimilarity, range)?;

    let mut best: Option<Calibration> = None;
    let mut grid_mse = Vec::with_capacity(grid.len());
    for &c in &grid {
        let samples: Vec<(Features, f64)> = cache
            .features(c)
            .into_iter()
            .zip(cache.targets.iter().copied())
            .collect();
        let fit = fit_weights(&samples)?;
        let mse = samples
            .iter()
            .map(|(f, y)| (y - predict_dp(f, &fit.weights)).powi(2))
            .sum::<f64>()
            / samples.len() as f64;
        grid_mse.push((c, mse));
        if best.as_ref().is_none_or(|b| mse < b.mse) {
            best = Some(Calibration {
                c,
                fit,
                mse,
                grid_mse: Vec::new(),
            });
        }
    }
    let mut best = best.expect("grid is non-empty");
    best.grid_mse = grid_mse;
    Ok(best)
}

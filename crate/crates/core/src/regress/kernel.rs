use serde::{Deserialize, Serialize};

use super::similarity::score_normalized_bank;
use crate::error::{Error, Result};
use crate::pattern_bank::{normalize, PatternBank};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelVariant {
    /// `exp(-|x - x_i|^2 / 4)` on the raw vectors.
    GaussianL2,
    /// `exp(c * s(x, x_i))` with `s` the window similarity.
    ExpSimilarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelChoice {
    pub variant: KernelVariant,
    /// Sharpness of the similarity kernel; unused by `GaussianL2`.
    pub c: f64,
}

impl KernelChoice {
    pub fn gaussian_l2() -> Self {
        Self {
            variant: KernelVariant::GaussianL2,
            c: 1.0,
        }
    }

    pub fn exp_similarity(c: f64) -> Self {
        Self {
            variant: KernelVariant::ExpSimilarity,
            c,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variant == KernelVariant::ExpSimilarity && !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel constant {} must be positive",
                self.c
            )));
        }
        Ok(())
    }
}

/// Log of the unnormalized kernel weight of each bank entry.
pub fn log_scores(x: &[f64], bank: &PatternBank, kernel: KernelChoice) -> Result<Vec<f64>> {
    kernel.validate()?;
    if x.len() != bank.window_length() {
        return Err(Error::DimensionMismatch {
            expected: bank.window_length(),
            actual: x.len(),
        });
    }
    if bank.is_empty() {
        return Err(Error::InvalidArgument("empty pattern bank".into()));
    }
    Ok(match kernel.variant {
        KernelVariant::GaussianL2 => bank
            .entries()
            .iter()
            .map(|e| {
                let d2: f64 = x
                    .iter()
                    .zip(&e.vector)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                -0.25 * d2
            })
            .collect(),
        KernelVariant::ExpSimilarity => {
            let mut out = vec![0.0; bank.len()];
            let q = normalize(x);
            if !q.constant {
                score_normalized_bank(&q.values, bank.normalized_rows(), &mut out);
                out.iter_mut().for_each(|s| *s *= kernel.c);
            }
            out
        }
    })
}

pub(crate) fn softmax(log_scores: &[f64]) -> Vec<f64> {
    let max = log_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = log_scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= z);
    w
}

/// Normalized kernel weights of `x` against every bank entry.
pub fn kernel_weights(x: &[f64], bank: &PatternBank, kernel: KernelChoice) -> Result<Vec<f64>> {
    Ok(softmax(&log_scores(x, bank, kernel)?))
}

pub(crate) fn weighted_label(weights: &[f64], bank: &PatternBank) -> f64 {
    let (lo, hi) = bank
        .labels()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| {
            (lo.min(y), hi.max(y))
        });
    let y: f64 = weights.iter().zip(bank.labels()).map(|(w, y)| w * y).sum();
    y.clamp(lo, hi)
}

/// Kernel estimate of the conditional expectation of the label: the
/// weight-averaged bank labels.
pub fn predict_label(x: &[f64], bank: &PatternBank, kernel: KernelChoice) -> Result<f64> {
    let w = kernel_weights(x, bank, kernel)?;
    Ok(weighted_label(&w, bank))
}

/// Kernel mass of the bank entries whose label equals `y` exactly.
pub fn empirical_conditional(
    y: f64,
    x: &[f64],
    bank: &PatternBank,
    kernel: KernelChoice,
) -> Result<f64> {
    let w = kernel_weights(x, bank, kernel)?;
    Ok(w.iter()
        .zip(bank.labels())
        .filter(|(_, l)| *l == y)
        .map(|(w, _)| w)
        .sum())
}

/// Decides class 1 iff the class-1 kernel mass strictly exceeds the class-0
/// mass. A bank holding only one class returns that class.
pub fn classify_from_log_scores(log_scores: &[f64], labels: &[u8]) -> u8 {
    let max = log_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut mass0, mut mass1) = (0.0, 0.0);
    let (mut has0, mut has1) = (false, false);
    for (s, &l) in log_scores.iter().zip(labels) {
        let w = (s - max).exp();
        if l == 1 {
            mass1 += w;
            has1 = true;
        } else {
            mass0 += w;
            has0 = true;
        }
    }
    match (has0, has1) {
        (false, true) => 1,
        (true, false) | (false, false) => 0,
        (true, true) => u8::from(mass1 > mass0),
    }
}

pub fn classify_binary(x: &[f64], bank: &PatternBank, kernel: KernelChoice) -> Result<u8> {
    let labels = bank
        .labels()
        .map(|y| match y {
            0.0 => Ok(0u8),
            1.0 => Ok(1u8),
            v => Err(Error::InvalidArgument(format!(
                "binary bank holds label {v}"
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(classify_from_log_scores(
        &log_scores(x, bank, kernel)?,
        &labels,
    ))
}

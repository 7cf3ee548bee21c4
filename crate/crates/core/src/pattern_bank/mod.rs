//! Labeled windows, k-means pattern mining and the representative banks used
//! as support for the kernel estimator.

mod bank;
mod kmeans;

pub use bank::{build_banks, select_effective, BankConfig, BankEntry, PatternBank, Representative};
pub use kmeans::{kmeans, ClusterSet};

use crate::error::{Error, Result};
use crate::market_data::PriceSeries;

/// Window lengths of the three banks, in grid buckets (30, 60, 120 minutes
/// at a 10 s grid).
pub const WINDOW_LENGTHS: [usize; 3] = [180, 360, 720];

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub values: Vec<f64>,
    /// The input had no variation; `values` is all zeros.
    pub constant: bool,
}

/// Rescales to zero mean and unit (population) standard deviation.
pub fn normalize(x: &[f64]) -> Normalized {
    let n = x.len();
    if n == 0 {
        return Normalized {
            values: Vec::new(),
            constant: true,
        };
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = f64::EPSILON * scale;
    if !(ss > n as f64 * floor * floor) {
        return Normalized {
            values: vec![0.0; n],
            constant: true,
        };
    }
    let std = (ss / n as f64).sqrt();
    Normalized {
        values: x.iter().map(|v| (v - mean) / std).collect(),
        constant: false,
    }
}

/// A historical window and the price change that followed it.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub x: Vec<f64>,
    pub y: f64,
    pub normalized_x: Vec<f64>,
    pub constant: bool,
}

impl Pattern {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        let Normalized { values, constant } = normalize(&x);
        Self {
            x,
            y,
            normalized_x: values,
            constant,
        }
    }
}

/// Every `stride`-th window of `window` prices together with the increment
/// into the bucket right after it.
pub fn extract_windows(series: &PriceSeries, window: usize, stride: usize) -> Result<Vec<Pattern>> {
    if window == 0 || stride == 0 {
        return Err(Error::InvalidArgument(
            "window and stride must be positive".into(),
        ));
    }
    let p = &series.prices;
    if p.len() < window + 1 {
        return Err(Error::SeriesTooShort {
            needed: window + 1,
            available: p.len(),
        });
    }
    Ok((0..p.len() - window)
        .step_by(stride)
        .map(|i| Pattern::new(p[i..i + window].to_vec(), p[i + window] - p[i + window - 1]))
        .collect())
}

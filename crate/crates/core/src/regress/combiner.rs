use nalgebra::{Matrix5, SymmetricEigen, Vector5};
use serde::{Deserialize, Serialize};

use super::features::Features;
use crate::error::{Error, Result};

/// Diagonal load added to the normal equations when the design is rank
/// deficient.
pub const RIDGE_LAMBDA: f64 = 1e-8;

/// Smallest eigenvalue of the Gram matrix, relative to the largest, below
/// which the design counts as rank deficient.
const RANK_TOL: f64 = 1e-12;

/// `dp = w0 + w1 dp1 + w2 dp2 + w3 dp3 + w4 r`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CombinerWeights {
    pub w0: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
}

impl CombinerWeights {
    pub fn from_array(w: [f64; 5]) -> Self {
        Self {
            w0: w[0],
            w1: w[1],
            w2: w[2],
            w3: w[3],
            w4: w[4],
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.w0, self.w1, self.w2, self.w3, self.w4]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|w| w.is_finite())
    }
}

pub fn predict_dp(features: &Features, weights: &CombinerWeights) -> f64 {
    weights.w0
        + weights.w1 * features.dp[0]
        + weights.w2 * features.dp[1]
        + weights.w3 * features.dp[2]
        + weights.w4 * features.r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightFit {
    pub weights: CombinerWeights,
    /// The design was rank deficient and the ridge system was solved.
    pub ridge: bool,
}

/// Least-squares fit of the combiner on design rows `[1, dp1, dp2, dp3, r]`,
/// solved through the normal equations. A rank-deficient design falls back
/// to ridge regression with `RIDGE_LAMBDA`.
pub fn fit_weights(samples: &[(Features, f64)]) -> Result<WeightFit> {
    if samples.len() < 5 {
        return Err(Error::InvalidArgument(format!(
            "need at least 5 samples to fit 5 weights, got {}",
            samples.len()
        )));
    }
    let mut gram = Matrix5::<f64>::zeros();
    let mut rhs = Vector5::<f64>::zeros();
    for (f, target) in samples {
        let row = Vector5::new(1.0, f.dp[0], f.dp[1], f.dp[2], f.r);
        if !row.iter().all(|v| v.is_finite()) || !target.is_finite() {
            return Err(Error::InvalidArgument(
                "non-finite feature or target".into(),
            ));
        }
        gram += row * row.transpose();
        rhs += row * *target;
    }

    let eig = SymmetricEigen::new(gram).eigenvalues;
    let max = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let deficient = !(max > 0.0) || min <= RANK_TOL * max;

    let solve = |g: Matrix5<f64>| g.cholesky().map(|c| c.solve(&rhs));
    let (w, ridge) = match (deficient, solve(gram)) {
        (false, Some(w)) => (w, false),
        _ => {
            let loaded = gram + Matrix5::identity() * RIDGE_LAMBDA;
            let w = solve(loaded)
                .or_else(|| loaded.lu().solve(&rhs))
                .ok_or_else(|| Error::InvalidArgument("singular design even after ridge".into()))?;
            (w, true)
        }
    };
    let weights = CombinerWeights::from_array([w[0], w[1], w[2], w[3], w[4]]);
    if !weights.is_finite() {
        return Err(Error::InvalidArgument("weight fit diverged".into()));
    }
    Ok(WeightFit { weights, ridge })
}

//! Kernel-weighted empirical Bayesian regression over pattern banks and the
//! linear combiner that turns the three bank predictions into a price-change
//! forecast.

mod combiner;
mod features;
mod kernel;
mod model;
mod similarity;

pub use combiner::{fit_weights, predict_dp, CombinerWeights, WeightFit, RIDGE_LAMBDA};
pub use features::{
    assemble_features, calibrate_c, decision_range, Calibration, FeatureCache, Features,
    DEFAULT_C_GRID,
};
pub use kernel::{
    classify_binary, classify_from_log_scores, empirical_conditional, kernel_weights, log_scores,
    predict_label, KernelChoice, KernelVariant,
};
pub use model::PredictorModel;
pub use similarity::{dot_similarity, score_normalized_bank, similarity};

//! Latent-source Bayesian regression for short-horizon price-change
//! prediction, a threshold trading strategy built on it, and the tooling to
//! backtest both on recorded or synthetic data.
//!
//! The main entry points are re-exported at the crate root:
//! [`coarsen`] turns ticks into a [`PriceSeries`], [`build_banks`] mines
//! pattern banks, [`calibrate_c`] fits the combiner, and [`run_backtest`] /
//! [`sweep_thresholds`] evaluate the strategy. [`pipeline::run_pipeline`]
//! chains all of them.

// `!(x > 0.0)` is used on purpose so NaN is rejected along with non-positives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluator;
pub mod market_data;
pub mod pattern_bank;
pub mod perf;
pub mod pipeline;
pub mod regress;
pub mod sim;
pub mod trader;

pub use error::{Error, Result};
pub use evaluator::{
    emit_report, sharpe, sweep_thresholds, BacktestReport, SharpeRatio, SharpeVariant, SweepRow,
};
pub use market_data::{coarsen, imbalance, parse_ticks, BookSnapshot, PriceSeries, TickRecord};
pub use pattern_bank::{
    build_banks, extract_windows, kmeans, normalize, select_effective, ClusterSet, Pattern,
    PatternBank,
};
pub use pipeline::{run_pipeline, RunConfig};
pub use regress::{
    assemble_features, calibrate_c, classify_binary, empirical_conditional, fit_weights,
    kernel_weights, predict_dp, predict_label, similarity, CombinerWeights, Features, KernelChoice,
    KernelVariant, PredictorModel,
};
pub use sim::{
    generate_labeled, generate_price_series, random_sources, LabelDist, LatentSourceSpec,
};
pub use trader::{run_backtest, step, Position, Side, Trade};

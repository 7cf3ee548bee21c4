//! End-to-end orchestration: split a series into training, fitting and
//! evaluation periods, build banks on the first, calibrate on the second and
//! trade the third.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::{
    emit_report, sweep_stream, BacktestReport, ReportBundle, SharpeVariant, SweepRow,
};
use crate::market_data::{PriceSeries, DEFAULT_INTERVAL};
use crate::pattern_bank::{build_banks, BankConfig, PatternBank, WINDOW_LENGTHS};
use crate::regress::{calibrate_c, Calibration, KernelChoice, PredictorModel, DEFAULT_C_GRID};
use crate::sim::{generate_price_series, LatentSourceSpec, SyntheticSeries};
use crate::trader::{dp_stream, simulate, DpStream};

/// Quantiles of in-sample `|dp|` used as sweep thresholds when none are
/// configured.
pub const DEFAULT_THRESHOLD_QUANTILES: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];

/// Three days of 10-second buckets.
pub const DEFAULT_DURATION: f64 = 3.0 * 86_400.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub interval: f64,
    pub windows: [usize; 3],
    pub k: usize,
    pub m: usize,
    pub stride: usize,
    pub max_iters: usize,
    pub c_grid: Vec<f64>,
    /// Strictly increasing; derived from the fitting period when absent.
    pub thresholds: Option<Vec<f64>>,
    pub split: [f64; 3],
    pub seed: u64,
    pub sharpe_variant: SharpeVariant,
    /// Length of a generated synthetic series, seconds.
    pub duration: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            interval: DEFAULT_INTERVAL,
            windows: WINDOW_LENGTHS,
            k: 100,
            m: 20,
            stride: 1,
            max_iters: 100,
            c_grid: DEFAULT_C_GRID.to_vec(),
            thresholds: None,
            split: [1.0 / 3.0; 3],
            seed: 0,
            sharpe_variant: SharpeVariant::Sqrt,
            duration: DEFAULT_DURATION,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.split.iter().any(|f| !(*f > 0.0)) {
            return Err(Error::InvalidArgument(
                "split fractions must be positive".into(),
            ));
        }
        let total: f64 = self.split.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split fractions sum to {total}, not 1"
            )));
        }
        if !(self.interval > 0.0) {
            return Err(Error::InvalidArgument("interval must be positive".into()));
        }
        if self.k == 0 || self.m == 0 || self.stride == 0 {
            return Err(Error::InvalidArgument(
                "k, m and stride must be positive".into(),
            ));
        }
        if let Some(t) = &self.thresholds {
            if t.is_empty() || t.iter().any(|v| !(*v > 0.0)) || t.windows(2).any(|w| !(w[0] < w[1]))
            {
                return Err(Error::InvalidArgument(
                    "thresholds must be positive and strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn bank_config(&self) -> BankConfig {
        BankConfig {
            windows: self.windows,
            k: self.k,
            m: self.m,
            stride: self.stride,
            max_iters: self.max_iters,
            seed: derive_seed(self.seed, Stage::Banks),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Stage {
    Series,
    Banks,
}

/// Stage seed from the run seed (splitmix64 of the pair).
pub fn derive_seed(seed: u64, stage: Stage) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(stage as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Bucket ranges of the three consecutive periods.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Periods {
    pub train: Range<usize>,
    pub fit: Range<usize>,
    pub eval: Range<usize>,
}

impl Periods {
    /// First two periods get `floor(n * fraction)` buckets; the rest goes to
    /// evaluation.
    pub fn split(n: usize, fractions: [f64; 3]) -> Result<Self> {
        let a = (n as f64 * fractions[0]).floor() as usize;
        let b = (n as f64 * fractions[1]).floor() as usize;
        if a == 0 || b == 0 || a + b >= n {
            return Err(Error::InvalidArgument(format!(
                "cannot split {n} buckets with fractions {fractions:?}"
            )));
        }
        let periods = Self {
            train: 0..a,
            fit: a..a + b,
            eval: a + b..n,
        };
        periods.assert_disjoint(n);
        Ok(periods)
    }

    fn assert_disjoint(&self, n: usize) {
        assert!(self.train.start == 0 && self.train.end == self.fit.start);
        assert!(self.fit.end == self.eval.start && self.eval.end == n);
        assert!(!self.train.is_empty() && !self.fit.is_empty() && !self.eval.is_empty());
    }
}

pub fn synthesize(spec: &LatentSourceSpec, config: &RunConfig) -> Result<SyntheticSeries> {
    let mut spec = spec.clone();
    spec.interval = config.interval;
    generate_price_series(
        &spec,
        config.duration,
        derive_seed(config.seed, Stage::Series),
    )
}

pub fn stage_build_banks(series: &PriceSeries, config: &RunConfig) -> Result<Vec<PatternBank>> {
    config.validate()?;
    let periods = Periods::split(series.len(), config.split)?;
    build_banks(&series.slice(periods.train), &config.bank_config())
}

pub fn stage_fit(
    series: &PriceSeries,
    banks: Vec<PatternBank>,
    config: &RunConfig,
) -> Result<(PredictorModel, Calibration)> {
    config.validate()?;
    let periods = Periods::split(series.len(), config.split)?;
    let fit_series = series.slice(periods.fit);
    let cal = calibrate_c(&config.c_grid, &fit_series, &banks)?;
    let mut model =
        PredictorModel::new(banks, KernelChoice::exp_similarity(cal.c), cal.fit.weights)?;
    model.ridge_fallback = cal.fit.ridge;
    Ok((model, cal))
}

/// Quantiles of `|dp|` on the fitting period, positive and strictly
/// increasing.
pub fn default_thresholds(model: &PredictorModel, fit_series: &PriceSeries) -> Result<Vec<f64>> {
    let stream = dp_stream(model, fit_series)?;
    let mut mags: Vec<f64> = stream.dp.iter().map(|d| d.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    for q in DEFAULT_THRESHOLD_QUANTILES {
        let idx = ((mags.len() - 1) as f64 * q).round() as usize;
        let v = mags[idx];
        if v > 0.0 && out.last().is_none_or(|&last| v > last) {
            out.push(v);
        }
    }
    if out.is_empty() {
        out.push(1e-9);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub stream: DpStream,
    pub sweep: Vec<SweepRow>,
    /// Backtest at the sweep threshold with the highest total profit.
    pub report: BacktestReport,
}

pub fn stage_evaluate(
    eval_series: &PriceSeries,
    model: &PredictorModel,
    thresholds: &[f64],
    variant: SharpeVariant,
) -> Result<Evaluation> {
    let stream = dp_stream(model, eval_series)?;
    let sweep = sweep_stream(&stream, eval_series, thresholds, variant)?;
    let best = sweep
        .iter()
        .fold(None::<&SweepRow>, |best, row| match best {
            Some(b) if b.total_profit >= row.total_profit => Some(b),
            _ => Some(row),
        })
        .expect("sweep has rows");
    let report = simulate(&stream, eval_series, best.threshold)?;
    Ok(Evaluation {
        stream,
        sweep,
        report,
    })
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub periods: Periods,
    pub model: PredictorModel,
    pub calibration: Calibration,
    pub thresholds: Vec<f64>,
    pub evaluation: Evaluation,
    pub bundle: ReportBundle,
}

#[derive(Serialize)]
struct PeriodsFile<'a> {
    buckets: usize,
    interval: f64,
    train: &'a Range<usize>,
    fit: &'a Range<usize>,
    eval: &'a Range<usize>,
}

#[derive(Serialize)]
struct CalibrationFile<'a> {
    c: f64,
    mse: f64,
    ridge_fallback: bool,
    grid_mse: &'a [(f64, f64)],
    thresholds: &'a [f64],
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs every stage and writes banks, model, period bounds and the report
/// bundle under `out`.
pub fn run_pipeline(
    series: &PriceSeries,
    config: &RunConfig,
    out: &Path,
) -> Result<PipelineOutcome> {
    config.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let periods = Periods::split(series.len(), config.split)?;
    info!(
        "periods: train {:?}, fit {:?}, eval {:?} ({} buckets)",
        periods.train,
        periods.fit,
        periods.eval,
        series.len()
    );
    write_json(
        &out.join("periods.json"),
        &PeriodsFile {
            buckets: series.len(),
            interval: series.interval,
            train: &periods.train,
            fit: &periods.fit,
            eval: &periods.eval,
        },
    )?;

    let banks = build_banks(&series.slice(periods.train.clone()), &config.bank_config())?;
    let bank_dir = out.join("banks");
    fs::create_dir_all(&bank_dir).map_err(|e| Error::io(&bank_dir, e))?;
    let bank_paths: Vec<PathBuf> = banks
        .iter()
        .map(|b| PathBuf::from("banks").join(format!("bank_{}.json", b.window_length())))
        .collect();
    // written as built, like `build-banks`; the model carries the fitted c
    for (bank, rel) in banks.iter().zip(&bank_paths) {
        bank.save(&out.join(rel))?;
    }

    let fit_series = series.slice(periods.fit.clone());
    let cal = calibrate_c(&config.c_grid, &fit_series, &banks)?;
    info!("kernel constant {} (in-sample mse {:.6e})", cal.c, cal.mse);
    let mut model =
        PredictorModel::new(banks, KernelChoice::exp_similarity(cal.c), cal.fit.weights)?;
    model.ridge_fallback = cal.fit.ridge;
    model.save(&out.join("model.json"), &bank_paths)?;

    let thresholds = match &config.thresholds {
        Some(t) => t.clone(),
        None => default_thresholds(&model, &fit_series)?,
    };
    write_json(
        &out.join("calibration.json"),
        &CalibrationFile {
            c: cal.c,
            mse: cal.mse,
            ridge_fallback: cal.fit.ridge,
            grid_mse: &cal.grid_mse,
            thresholds: &thresholds,
        },
    )?;

    let eval_series = series.slice(periods.eval.clone());
    let evaluation = stage_evaluate(&eval_series, &model, &thresholds, config.sharpe_variant)?;
    info!(
        "threshold {}: {} trades, total profit {:.4}",
        evaluation.report.threshold, evaluation.report.num_trades, evaluation.report.total_profit
    );
    let bundle = emit_report(
        out,
        &evaluation.report,
        &evaluation.sweep,
        &model.banks,
        config.sharpe_variant,
    )?;

    Ok(PipelineOutcome {
        periods,
        model,
        calibration: cal,
        thresholds,
        evaluation,
        bundle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirds_with_remainder_last() {
        let p = Periods::split(100, [1.0 / 3.0; 3]).unwrap();
        assert_eq!(p.train, 0..33);
        assert_eq!(p.fit, 33..66);
        assert_eq!(p.eval, 66..100);
    }

    #[test]
    fn split_validation() {
        let mut c = RunConfig {
            split: [0.5, 0.5, 0.5],
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        c.split = [0.33, 0.33, 0.34];
        assert!(c.validate().is_ok());
        c.split = [0.0, 0.5, 0.5];
        assert!(c.validate().is_err());
        assert!(Periods::split(2, [1.0 / 3.0; 3]).is_err());
    }

    #[test]
    fn stage_seeds_differ() {
        assert_ne!(derive_seed(7, Stage::Series), derive_seed(7, Stage::Banks));
        assert_eq!(derive_seed(7, Stage::Banks), derive_seed(7, Stage::Banks));
    }
}

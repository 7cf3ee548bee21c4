use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;

use lst_core::evaluator::{emit_report, write_sweep_csv, SweepRow};
use lst_core::market_data::{coarsen, read_ticks};
use lst_core::pipeline::{
    default_thresholds, run_pipeline, stage_build_banks, stage_evaluate, stage_fit, synthesize,
    Periods, RunConfig,
};
use lst_core::sim::LatentSourceSpec;
use lst_core::trader::run_backtest;
use lst_core::{PatternBank, PredictorModel, PriceSeries};

use crate::SeriesSource;

const SERIES_FILE: &str = "series.csv";

fn ensure_exists(path: &Path) -> Result<()> {
    if !path.exists() {
        bail!("input file {} does not exist", path.display());
    }
    Ok(())
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

/// Generates, coarsens or loads a series. Generated and coarsened series are
/// also written to `<out>/series.csv`.
fn load_series(config: &RunConfig, source: &SeriesSource, out: &Path) -> Result<PriceSeries> {
    if let Some(path) = &source.series {
        ensure_exists(path)?;
        return PriceSeries::load(path)
            .with_context(|| format!("loading series {}", path.display()));
    }
    let series = if let Some(path) = &source.input {
        ensure_exists(path)?;
        let ticks =
            read_ticks(path).with_context(|| format!("reading ticks {}", path.display()))?;
        coarsen(&ticks, config.interval)?
    } else if let Some(path) = &source.spec {
        generate(config, path, out)?
    } else {
        bail!("one of --series, --input or --spec is required");
    };
    create_out(out)?;
    series.save(&out.join(SERIES_FILE))?;
    Ok(series)
}

fn generate(config: &RunConfig, spec_path: &Path, out: &Path) -> Result<PriceSeries> {
    ensure_exists(spec_path)?;
    let spec = LatentSourceSpec::load(spec_path)
        .with_context(|| format!("loading spec {}", spec_path.display()))?;
    let synthetic = synthesize(&spec, config)?;
    create_out(out)?;
    let mut text = String::from("start,source\n");
    for p in &synthetic.plants {
        writeln!(text, "{},{}", p.start, p.source)?;
    }
    let path = out.join("plants.csv");
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    info!(
        "generated {} buckets with {} planted patterns",
        synthetic.series.len(),
        synthetic.plants.len()
    );
    Ok(synthetic.series)
}

pub fn gen(config: &RunConfig, spec: &Path, out: &Path) -> Result<()> {
    let series = generate(config, spec, out)?;
    series.save(&out.join(SERIES_FILE))?;
    Ok(())
}

pub fn ingest(config: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    let source = SeriesSource {
        input: Some(input.to_path_buf()),
        ..SeriesSource::default()
    };
    let series = load_series(config, &source, out)?;
    info!(
        "coarsened into {} buckets of {}s",
        series.len(),
        series.interval
    );
    Ok(())
}

fn bank_file(window: usize) -> PathBuf {
    PathBuf::from("banks").join(format!("bank_{window}.json"))
}

pub fn build_banks(config: &RunConfig, source: &SeriesSource, out: &Path) -> Result<()> {
    let series = load_series(config, source, out)?;
    let banks = stage_build_banks(&series, config)?;
    create_out(&out.join("banks"))?;
    for bank in &banks {
        let path = out.join(bank_file(bank.window_length()));
        bank.save(&path)?;
        info!(
            "bank M={}: {} patterns -> {}",
            bank.window_length(),
            bank.len(),
            path.display()
        );
    }
    Ok(())
}

pub fn fit(
    config: &RunConfig,
    source: &SeriesSource,
    banks: Option<PathBuf>,
    out: &Path,
) -> Result<()> {
    let series = load_series(config, source, out)?;
    let dir = banks.unwrap_or_else(|| out.join("banks"));
    let mut loaded = Vec::new();
    let mut paths = Vec::new();
    for window in config.windows {
        let path = dir.join(format!("bank_{window}.json"));
        ensure_exists(&path)?;
        loaded.push(
            PatternBank::load(&path).with_context(|| format!("loading bank {}", path.display()))?,
        );
        paths.push(if dir == out.join("banks") {
            bank_file(window)
        } else {
            fs::canonicalize(&path)?
        });
    }
    let (model, cal) = stage_fit(&series, loaded, config)?;
    info!(
        "kernel constant {} (mse {:.6e}); weights {:?}{}",
        cal.c,
        cal.mse,
        model.weights.to_array(),
        if model.ridge_fallback {
            " via ridge"
        } else {
            ""
        }
    );
    model.save(&out.join("model.json"), &paths)?;
    Ok(())
}

fn load_model(model: Option<PathBuf>, out: &Path) -> Result<PredictorModel> {
    let path = model.unwrap_or_else(|| out.join("model.json"));
    ensure_exists(&path)?;
    PredictorModel::load(&path).with_context(|| format!("loading model {}", path.display()))
}

struct Periodized {
    fit: PriceSeries,
    eval: PriceSeries,
}

fn periods(config: &RunConfig, series: &PriceSeries) -> Result<Periodized> {
    let p = Periods::split(series.len(), config.split)?;
    info!(
        "periods: train {:?}, fit {:?}, eval {:?}",
        p.train, p.fit, p.eval
    );
    Ok(Periodized {
        fit: series.slice(p.fit),
        eval: series.slice(p.eval),
    })
}

fn thresholds(config: &RunConfig, model: &PredictorModel, fit: &PriceSeries) -> Result<Vec<f64>> {
    Ok(match &config.thresholds {
        Some(t) => t.clone(),
        None => default_thresholds(model, fit)?,
    })
}

pub fn backtest(
    config: &RunConfig,
    source: &SeriesSource,
    model: Option<PathBuf>,
    threshold: f64,
    out: &Path,
) -> Result<()> {
    let series = load_series(config, source, out)?;
    let model = load_model(model, out)?;
    let parts = periods(config, &series)?;
    let report = run_backtest(&model, &parts.eval, threshold)?;
    let sweep = [SweepRow::from_report(&report, config.sharpe_variant)];
    emit_report(out, &report, &sweep, &model.banks, config.sharpe_variant)?;
    info!(
        "{} trades, total profit {:.4}",
        report.num_trades, report.total_profit
    );
    Ok(())
}

pub fn sweep(
    config: &RunConfig,
    source: &SeriesSource,
    model: Option<PathBuf>,
    out: &Path,
) -> Result<()> {
    let series = load_series(config, source, out)?;
    let model = load_model(model, out)?;
    let parts = periods(config, &series)?;
    let ts = thresholds(config, &model, &parts.fit)?;
    let evaluation = stage_evaluate(&parts.eval, &model, &ts, config.sharpe_variant)?;
    create_out(out)?;
    write_sweep_csv(&out.join("sweep.csv"), &evaluation.sweep)?;
    Ok(())
}

pub fn report(
    config: &RunConfig,
    source: &SeriesSource,
    model: Option<PathBuf>,
    out: &Path,
) -> Result<()> {
    let series = load_series(config, source, out)?;
    let model = load_model(model, out)?;
    let parts = periods(config, &series)?;
    let ts = thresholds(config, &model, &parts.fit)?;
    let evaluation = stage_evaluate(&parts.eval, &model, &ts, config.sharpe_variant)?;
    emit_report(
        out,
        &evaluation.report,
        &evaluation.sweep,
        &model.banks,
        config.sharpe_variant,
    )?;
    info!(
        "threshold {}: {} trades, total profit {:.4}",
        evaluation.report.threshold, evaluation.report.num_trades, evaluation.report.total_profit
    );
    Ok(())
}

pub fn pipeline(config: &RunConfig, source: &SeriesSource, out: &Path) -> Result<()> {
    let series = load_series(config, source, out)?;
    run_pipeline(&series, config, out)?;
    Ok(())
}

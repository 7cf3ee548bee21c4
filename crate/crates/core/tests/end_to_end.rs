mod common;

use std::fs;
use std::path::PathBuf;
use std::sync::OnceLock;

use common::{is_non_increasing, planted_series};
use lst_core::evaluator::{Summary, SUMMARY_KEYS};
use lst_core::pipeline::{run_pipeline, PipelineOutcome, RunConfig};
use lst_core::trader::dp_stream;
use lst_core::{
    emit_report, run_backtest, sweep_thresholds, PatternBank, PredictorModel, PriceSeries,
    SharpeVariant, SweepRow,
};

struct Run {
    dir: PathBuf,
    series: PriceSeries,
    outcome: PipelineOutcome,
}

impl Run {
    fn eval(&self) -> PriceSeries {
        self.series.slice(self.outcome.periods.eval.clone())
    }
}

/// One three-day pipeline on a noisy planted series, shared by every test.
fn run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| {
        let config = RunConfig {
            seed: 3,
            ..RunConfig::default()
        };
        let series = planted_series(0.5, &config);
        let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("end_to_end");
        let _ = fs::remove_dir_all(&dir);
        let outcome = run_pipeline(&series, &config, &dir).unwrap();
        Run {
            dir,
            series,
            outcome,
        }
    })
}

#[test]
fn three_day_series_gives_full_banks() {
    let run = run();
    let banks = &run.outcome.model.banks;
    let shapes: Vec<(usize, usize)> = banks.iter().map(|b| (b.window_length(), b.len())).collect();
    assert_eq!(shapes, vec![(180, 20), (360, 20), (720, 20)]);
    for bank in banks {
        let path = run
            .dir
            .join(format!("banks/bank_{}.json", bank.window_length()));
        let saved = PatternBank::load(&path).unwrap();
        assert_eq!(saved.entries(), bank.entries());
        assert_eq!(saved.window_length(), bank.window_length());
        assert!(bank
            .entries()
            .iter()
            .all(|e| e.vector.len() == bank.window_length()));
    }
}

#[test]
fn periods_are_disjoint_thirds() {
    let run = run();
    let p = &run.outcome.periods;
    let n = run.series.len();
    assert_eq!((p.train.start, p.train.end), (0, n / 3));
    assert_eq!((p.fit.start, p.fit.end), (n / 3, 2 * (n / 3)));
    assert_eq!((p.eval.start, p.eval.end), (2 * (n / 3), n));
    let logged: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.dir.join("periods.json")).unwrap()).unwrap();
    assert_eq!(logged["buckets"], n);
    assert_eq!(logged["fit"]["start"], p.fit.start);
    assert_eq!(logged["eval"]["end"], n);
}

#[test]
fn summary_has_every_key_and_conserves_cash() {
    let run = run();
    let text = fs::read_to_string(run.dir.join("summary.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in SUMMARY_KEYS {
        assert!(value.get(key).is_some(), "summary lacks {key}");
    }
    let summary: Summary = serde_json::from_value(value).unwrap();
    let report = &run.outcome.evaluation.report;
    assert_eq!(summary.total_profit, report.total_profit);
    assert_eq!(summary.num_trades, report.num_trades);

    // cash rebuilt from trades.csv alone
    let mut reader = csv::Reader::from_path(run.dir.join("trades.csv")).unwrap();
    let mut cash = 0.0;
    let mut rows = 0;
    for row in reader.records() {
        let row = row.unwrap();
        let price: f64 = row[2].parse().unwrap();
        cash += if &row[1] == "buy" { -price } else { price };
        rows += 1;
    }
    assert_eq!(rows, report.num_trades);
    assert!((cash - report.total_profit).abs() <= 1e-9);
    let closed: f64 = report
        .round_trips
        .iter()
        .filter(|r| !r.liquidation)
        .map(|r| r.profit)
        .sum();
    assert!((closed + report.liquidation_pnl.unwrap_or(0.0) - cash).abs() <= 1e-9);
}

#[test]
fn trained_model_profits_on_planted_series() {
    let report = &run().outcome.evaluation.report;
    assert!(report.total_profit > 0.0, "{}", report.total_profit);
    assert!(report.num_trades > 0);
}

#[test]
fn sweep_rows_are_internally_consistent() {
    let run = run();
    let rows = &run.outcome.evaluation.sweep;
    assert!(rows.windows(2).all(|w| w[0].threshold < w[1].threshold));
    for row in rows {
        let implied = row.avg_profit_per_trade * row.num_round_trips as f64;
        assert!((implied - row.total_profit).abs() <= 1e-6);
    }
    let crossings: Vec<usize> = rows.iter().map(|r| r.signal_crossings).collect();
    assert!(is_non_increasing(&crossings));
    let stream = &run.outcome.evaluation.stream;
    for row in rows {
        assert_eq!(
            row.signal_crossings,
            stream.dp.iter().filter(|d| d.abs() > row.threshold).count()
        );
    }

    let report = &run.outcome.evaluation.report;
    assert_eq!(
        report.equity.last().unwrap().cum_profit,
        report.total_profit
    );
    let best = rows
        .iter()
        .map(|r| r.total_profit)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(report.total_profit, best);
}

#[test]
fn single_threshold_sweep_matches_standalone_backtest() {
    let run = run();
    let model = &run.outcome.model;
    let eval = run.eval();
    let t = run.outcome.thresholds[1];
    let sweep = sweep_thresholds(model, &eval, &[t]).unwrap();
    let alone = run_backtest(model, &eval, t).unwrap();
    assert_eq!(
        sweep,
        vec![SweepRow::from_report(&alone, SharpeVariant::Sqrt)]
    );
}

#[test]
fn threshold_above_every_prediction_trades_nothing() {
    let run = run();
    let eval = run.eval();
    let top = run
        .outcome
        .evaluation
        .stream
        .dp
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()));
    let report = run_backtest(&run.outcome.model, &eval, top * 1.01).unwrap();
    assert_eq!((report.num_trades, report.total_profit), (0, 0.0));
    assert!(report.total_profit.is_sign_positive());
    assert!(!report.sharpe.defined);

    let dir = tempfile::tempdir().unwrap();
    let row = SweepRow::from_report(&report, SharpeVariant::Sqrt);
    emit_report(
        dir.path(),
        &report,
        &[row],
        &run.outcome.model.banks,
        SharpeVariant::Sqrt,
    )
    .unwrap();
    let summary: Summary =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(
        (summary.num_trades, summary.total_profit, summary.return_pct),
        (0, 0.0, 0.0)
    );
    assert_eq!(summary.sharpe, None);
    assert!(!summary.sharpe_defined);
    let trades = fs::read_to_string(dir.path().join("trades.csv")).unwrap();
    assert_eq!(
        trades.trim_end(),
        "time,side,price,position_after,round_trip_profit"
    );
}

#[test]
fn saved_model_reproduces_predictions() {
    let run = run();
    let loaded = PredictorModel::load(&run.dir.join("model.json")).unwrap();
    assert_eq!(loaded.kernel, run.outcome.model.kernel);
    assert_eq!(loaded.weights, run.outcome.model.weights);
    assert_eq!(
        dp_stream(&loaded, &run.eval()).unwrap(),
        run.outcome.evaluation.stream
    );
}

#[test]
fn re_emitting_the_report_is_byte_identical() {
    let run = run();
    let ev = &run.outcome.evaluation;
    let dir = tempfile::tempdir().unwrap();
    emit_report(
        dir.path(),
        &ev.report,
        &ev.sweep,
        &run.outcome.model.banks,
        SharpeVariant::Sqrt,
    )
    .unwrap();
    for name in [
        "summary.json",
        "sweep.csv",
        "equity_curve.csv",
        "cluster_centers.csv",
        "trades.csv",
    ] {
        assert_eq!(
            fs::read(dir.path().join(name)).unwrap(),
            fs::read(run.dir.join(name)).unwrap(),
            "{name} differs"
        );
    }
    let centers = fs::read_to_string(dir.path().join("cluster_centers.csv")).unwrap();
    assert_eq!(centers.lines().count(), 60);
    assert!(centers.lines().all(|l| {
        let fields = l.split(',').count();
        let id: usize = l.split(',').next().unwrap().parse().unwrap();
        fields == 2 + [180, 360, 720][id - 1]
    }));
}

//! Backtest metrics, threshold sweeps and the on-disk report bundle.

use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::PriceSeries;
use crate::pattern_bank::PatternBank;
use crate::regress::PredictorModel;
use crate::trader::{dp_stream, simulate, DpStream, Ledger, RoundTrip, Trade};

/// How the dispersion of round-trip profits is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SharpeVariant {
    /// Standard deviation (root of the mean squared deviation).
    #[default]
    Sqrt,
    /// Mean squared deviation without the root.
    PaperLiteral,
}

impl FromStr for SharpeVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt" => Ok(Self::Sqrt),
            "paper-literal" => Ok(Self::PaperLiteral),
            other => Err(Error::InvalidArgument(format!(
                "unknown sharpe variant `{other}` (expected sqrt or paper-literal)"
            ))),
        }
    }
}

impl fmt::Display for SharpeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sqrt => "sqrt",
            Self::PaperLiteral => "paper-literal",
        })
    }
}

/// A Sharpe value; undefined ratios carry NaN and `defined == false`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharpeRatio {
    pub value: f64,
    pub defined: bool,
}

impl SharpeRatio {
    pub fn undefined() -> Self {
        Self {
            value: f64::NAN,
            defined: false,
        }
    }

    pub fn as_option(&self) -> Option<f64> {
        self.defined.then_some(self.value)
    }
}

/// `(sum(p) - c) / (L * sigma_p)` over round-trip profits `p`, where `c` is
/// the absolute price drift of the evaluation interval. Undefined for fewer
/// than two profits or zero dispersion.
pub fn sharpe(profits: &[f64], c: f64, variant: SharpeVariant) -> SharpeRatio {
    let l = profits.len();
    if l < 2 {
        return SharpeRatio::undefined();
    }
    let n = l as f64;
    let total: f64 = profits.iter().sum();
    let mean = total / n;
    let msd = profits.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
    let sigma = match variant {
        SharpeVariant::Sqrt => msd.sqrt(),
        SharpeVariant::PaperLiteral => msd,
    };
    if !(sigma > 0.0) {
        return SharpeRatio::undefined();
    }
    SharpeRatio {
        value: (total - c) / (n * sigma),
        defined: true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquityPoint {
    pub bucket_time: f64,
    pub price: f64,
    pub cum_profit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub threshold: f64,
    pub interval: f64,
    pub trades: Vec<Trade>,
    pub round_trips: Vec<RoundTrip>,
    /// Profit of the end-of-test liquidation, when a position was open.
    pub liquidation_pnl: Option<f64>,
    pub final_cash: f64,
    pub equity: Vec<EquityPoint>,
    pub total_profit: f64,
    pub num_trades: usize,
    pub avg_holding_time: f64,
    pub avg_investment: f64,
    pub return_pct: f64,
    pub start_price: f64,
    pub end_price: f64,
    /// `|end price - start price|` over the evaluation interval.
    pub buy_and_hold: f64,
    /// Standard-deviation form.
    pub sharpe: SharpeRatio,
    pub sharpe_paper_literal: SharpeRatio,
    pub signal_crossings: usize,
}

impl BacktestReport {
    pub(crate) fn from_ledger(
        ledger: Ledger,
        series: &PriceSeries,
        start: usize,
        equity: &[(usize, f64)],
        threshold: f64,
        signal_crossings: usize,
    ) -> Self {
        let last = series.len() - 1;
        let profits: Vec<f64> = ledger.round_trips.iter().map(|r| r.profit).collect();
        let total_profit = profits.iter().fold(0.0, |acc, p| acc + p);
        let rounds = ledger.round_trips.len();
        let (avg_holding_time, avg_investment) = if rounds > 0 {
            let held: usize = ledger
                .round_trips
                .iter()
                .map(|r| r.exit_time - r.entry_time)
                .sum();
            let invested: f64 = ledger.round_trips.iter().map(|r| r.entry_price).sum();
            (
                held as f64 / rounds as f64 * series.interval,
                invested / rounds as f64,
            )
        } else {
            (0.0, 0.0)
        };
        let return_pct = if avg_investment != 0.0 {
            100.0 * total_profit / avg_investment
        } else {
            0.0
        };
        let (start_price, end_price) = (series.prices[start], series.prices[last]);
        let buy_and_hold = (end_price - start_price).abs();
        Self {
            threshold,
            interval: series.interval,
            liquidation_pnl: ledger
                .round_trips
                .iter()
                .find(|r| r.liquidation)
                .map(|r| r.profit),
            final_cash: ledger.cash,
            equity: equity
                .iter()
                .map(|&(t, cum)| EquityPoint {
                    bucket_time: series.bucket_time(t),
                    price: series.prices[t],
                    cum_profit: cum,
                })
                .collect(),
            total_profit,
            num_trades: ledger.trades.len(),
            avg_holding_time,
            avg_investment,
            return_pct,
            start_price,
            end_price,
            buy_and_hold,
            sharpe: sharpe(&profits, buy_and_hold, SharpeVariant::Sqrt),
            sharpe_paper_literal: sharpe(&profits, buy_and_hold, SharpeVariant::PaperLiteral),
            signal_crossings,
            trades: ledger.trades,
            round_trips: ledger.round_trips,
        }
    }

    pub fn sharpe_for(&self, variant: SharpeVariant) -> SharpeRatio {
        match variant {
            SharpeVariant::Sqrt => self.sharpe,
            SharpeVariant::PaperLiteral => self.sharpe_paper_literal,
        }
    }

    pub fn num_round_trips(&self) -> usize {
        self.round_trips.len()
    }

    pub fn round_trip_profits(&self) -> Vec<f64> {
        self.round_trips.iter().map(|r| r.profit).collect()
    }

    /// Mean profit per closed round trip (0 without any).
    pub fn avg_profit_per_trade(&self) -> f64 {
        if self.round_trips.is_empty() {
            0.0
        } else {
            self.total_profit / self.round_trips.len() as f64
        }
    }

    /// Writes `time,side,price,position_after,round_trip_profit`.
    pub fn write_trades_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        w.write_record([
            "time",
            "side",
            "price",
            "position_after",
            "round_trip_profit",
        ])?;
        for t in &self.trades {
            w.write_record([
                t.time.to_string(),
                t.side.as_str().to_string(),
                t.price.to_string(),
                t.position_after.to_string(),
                t.round_trip_profit
                    .map(|p| p.to_string())
                    .unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    pub num_trades: usize,
    pub num_round_trips: usize,
    pub signal_crossings: usize,
    /// Seconds.
    pub avg_holding_time: f64,
    pub avg_profit_per_trade: f64,
    pub total_profit: f64,
    pub sharpe: SharpeRatio,
}

impl SweepRow {
    pub fn from_report(report: &BacktestReport, variant: SharpeVariant) -> Self {
        Self {
            threshold: report.threshold,
            num_trades: report.num_trades,
            num_round_trips: report.num_round_trips(),
            signal_crossings: report.signal_crossings,
            avg_holding_time: report.avg_holding_time,
            avg_profit_per_trade: report.avg_profit_per_trade(),
            total_profit: report.total_profit,
            sharpe: report.sharpe_for(variant),
        }
    }
}

fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::InvalidArgument("no thresholds to sweep".into()));
    }
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument(
            "thresholds must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// One backtest per threshold over a shared prediction stream.
pub fn sweep_stream(
    stream: &DpStream,
    series: &PriceSeries,
    thresholds: &[f64],
    variant: SharpeVariant,
) -> Result<Vec<SweepRow>> {
    check_thresholds(thresholds)?;
    thresholds
        .par_iter()
        .map(|&t| simulate(stream, series, t).map(|r| SweepRow::from_report(&r, variant)))
        .collect()
}

pub fn sweep_thresholds(
    model: &PredictorModel,
    series: &PriceSeries,
    thresholds: &[f64],
) -> Result<Vec<SweepRow>> {
    check_thresholds(thresholds)?;
    sweep_stream(
        &dp_stream(model, series)?,
        series,
        thresholds,
        SharpeVariant::Sqrt,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub threshold: f64,
    pub total_profit: f64,
    pub num_trades: usize,
    pub num_round_trips: usize,
    pub avg_investment: f64,
    pub return_pct: f64,
    pub avg_holding_s: f64,
    pub avg_profit_per_trade: f64,
    pub sharpe: Option<f64>,
    pub sharpe_defined: bool,
    pub sharpe_variant: SharpeVariant,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sharpe_sqrt: Option<Option<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sharpe_paper_literal: Option<Option<f64>>,
    pub start_price: f64,
    pub end_price: f64,
    pub buy_and_hold_c: f64,
    pub final_cash: f64,
    pub liquidation_pnl: Option<f64>,
}

/// Keys every `summary.json` carries.
pub const SUMMARY_KEYS: [&str; 11] = [
    "threshold",
    "total_profit",
    "num_trades",
    "num_round_trips",
    "avg_investment",
    "return_pct",
    "avg_holding_s",
    "sharpe",
    "sharpe_defined",
    "sharpe_variant",
    "buy_and_hold_c",
];

impl Summary {
    pub fn new(report: &BacktestReport, variant: SharpeVariant) -> Self {
        let (primary, extra_sqrt, extra_literal) = match variant {
            SharpeVariant::Sqrt => (report.sharpe, None, None),
            SharpeVariant::PaperLiteral => (
                report.sharpe_paper_literal,
                Some(report.sharpe.as_option()),
                Some(report.sharpe_paper_literal.as_option()),
            ),
        };
        Self {
            threshold: report.threshold,
            total_profit: report.total_profit,
            num_trades: report.num_trades,
            num_round_trips: report.num_round_trips(),
            avg_investment: report.avg_investment,
            return_pct: report.return_pct,
            avg_holding_s: report.avg_holding_time,
            avg_profit_per_trade: report.avg_profit_per_trade(),
            sharpe: primary.as_option(),
            sharpe_defined: primary.defined,
            sharpe_variant: variant,
            sharpe_sqrt: extra_sqrt,
            sharpe_paper_literal: extra_literal,
            start_price: report.start_price,
            end_price: report.end_price,
            buy_and_hold_c: report.buy_and_hold,
            final_cash: report.final_cash,
            liquidation_pnl: report.liquidation_pnl,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub summary: PathBuf,
    pub sweep: PathBuf,
    pub equity_curve: PathBuf,
    pub cluster_centers: PathBuf,
    pub trades: PathBuf,
}

fn fmt_sharpe(s: &SharpeRatio) -> String {
    s.as_option()
        .map(|v| v.to_string())
        .unwrap_or_else(|| "NaN".into())
}

pub fn write_sweep_csv(path: &Path, sweep: &[SweepRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record([
        "threshold",
        "num_trades",
        "avg_holding_s",
        "avg_profit",
        "total_profit",
        "sharpe",
    ])?;
    for row in sweep {
        w.write_record([
            row.threshold.to_string(),
            row.num_trades.to_string(),
            row.avg_holding_time.to_string(),
            row.avg_profit_per_trade.to_string(),
            row.total_profit.to_string(),
            fmt_sharpe(&row.sharpe),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `summary.json`, `sweep.csv`, `equity_curve.csv`,
/// `cluster_centers.csv` and `trades.csv` into `dir`.
pub fn emit_report(
    dir: &Path,
    report: &BacktestReport,
    sweep: &[SweepRow],
    banks: &[PatternBank],
    variant: SharpeVariant,
) -> Result<ReportBundle> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bundle = ReportBundle {
        summary: dir.join("summary.json"),
        sweep: dir.join("sweep.csv"),
        equity_curve: dir.join("equity_curve.csv"),
        cluster_centers: dir.join("cluster_centers.csv"),
        trades: dir.join("trades.csv"),
    };

    let summary = Summary::new(report, variant);
    let mut text =
        serde_json::to_string_pretty(&summary).map_err(|e| Error::json(&bundle.summary, e))?;
    text.push('\n');
    fs::write(&bundle.summary, text).map_err(|e| Error::io(&bundle.summary, e))?;

    write_sweep_csv(&bundle.sweep, sweep)?;

    let path = &bundle.equity_curve;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["bucket_time", "price", "cum_profit"])?;
    for p in &report.equity {
        w.write_record([
            p.bucket_time.to_string(),
            p.price.to_string(),
            p.cum_profit.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let path = &bundle.cluster_centers;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_writer(BufWriter::new(file));
    for (id, bank) in banks.iter().enumerate() {
        for e in bank.entries() {
            let mut row = Vec::with_capacity(e.vector.len() + 2);
            row.push((id + 1).to_string());
            row.push(e.label.to_string());
            row.extend(e.vector.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    report.write_trades_csv(&bundle.trades)?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_sharpe() {
        let s = sharpe(&[2.0, 4.0], 1.0, SharpeVariant::Sqrt);
        assert!(s.defined);
        assert_eq!(s.value, 2.5);
        assert_eq!(
            sharpe(&[2.0, 4.0], 1.0, SharpeVariant::PaperLiteral).value,
            2.5
        );
    }

    #[test]
    fn undefined_sharpe() {
        assert!(!sharpe(&[3.0, 3.0, 3.0], 1.0, SharpeVariant::Sqrt).defined);
        assert!(sharpe(&[3.0, 3.0], 1.0, SharpeVariant::Sqrt).value.is_nan());
        assert!(!sharpe(&[3.0], 0.0, SharpeVariant::Sqrt).defined);
        assert!(!sharpe(&[], 0.0, SharpeVariant::Sqrt).defined);
    }

    #[test]
    fn sharpe_is_scale_free() {
        let p = [1.0, -2.0, 4.5, 0.5];
        let doubled: Vec<f64> = p.iter().map(|v| 2.0 * v).collect();
        let a = sharpe(&p, 0.7, SharpeVariant::Sqrt).value;
        let b = sharpe(&doubled, 1.4, SharpeVariant::Sqrt).value;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn variant_parsing() {
        assert_eq!(
            "sqrt".parse::<SharpeVariant>().unwrap(),
            SharpeVariant::Sqrt
        );
        assert_eq!(
            "paper-literal".parse::<SharpeVariant>().unwrap(),
            SharpeVariant::PaperLiteral
        );
        assert!("root".parse::<SharpeVariant>().is_err());
    }

    #[test]
    fn thresholds_must_increase() {
        assert!(check_thresholds(&[]).is_err());
        assert!(check_thresholds(&[1.0, 1.0]).is_err());
        assert!(check_thresholds(&[2.0, 1.0]).is_err());
        assert!(check_thresholds(&[0.5]).is_ok());
    }
}

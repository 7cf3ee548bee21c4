//! Threshold trading on predicted price changes with a single-unit position.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::BacktestReport;
use crate::market_data::PriceSeries;
use crate::regress::{decision_range, PredictorModel};

/// Holding in units of the traded asset: short, flat or long.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Position(i8);

impl Position {
    pub const SHORT: Position = Position(-1);
    pub const FLAT: Position = Position(0);
    pub const LONG: Position = Position(1);

    pub fn new(units: i8) -> Option<Self> {
        (-1..=1).contains(&units).then_some(Self(units))
    }

    pub fn units(self) -> i8 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Buy => "buy",
            Side::Sell => "sell",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    /// Bucket index within the traded series.
    pub time: usize,
    pub side: Side,
    pub price: f64,
    pub position_after: i8,
    /// Set when the trade closes a round trip.
    pub round_trip_profit: Option<f64>,
}

/// One state-machine transition: buy one unit when `dp > threshold` and the
/// position is not long, sell one unit when `dp < -threshold` and the
/// position is not short, otherwise hold.
pub fn step(
    position: Position,
    dp: f64,
    threshold: f64,
    price: f64,
    time: usize,
) -> (Position, Option<Trade>) {
    let side = if dp > threshold && position.0 <= 0 {
        Side::Buy
    } else if dp < -threshold && position.0 >= 0 {
        Side::Sell
    } else {
        return (position, None);
    };
    let next = Position(position.0 + if side == Side::Buy { 1 } else { -1 });
    let trade = Trade {
        time,
        side,
        price,
        position_after: next.0,
        round_trip_profit: None,
    };
    (next, Some(trade))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrip {
    pub entry_time: usize,
    pub exit_time: usize,
    pub entry_price: f64,
    pub exit_price: f64,
    /// +1 for a long round trip, -1 for a short one.
    pub direction: i8,
    pub profit: f64,
    /// Closed by the end-of-test liquidation.
    pub liquidation: bool,
}

/// Cash, position and realized round trips of a running strategy.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ledger {
    pub position: Position,
    pub cash: f64,
    open: Option<(usize, f64)>,
    pub trades: Vec<Trade>,
    pub round_trips: Vec<RoundTrip>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    fn record(&mut self, mut trade: Trade, liquidation: bool) {
        let before = self.position.0;
        match trade.side {
            Side::Buy => self.cash -= trade.price,
            Side::Sell => self.cash += trade.price,
        }
        if before == 0 {
            self.open = Some((trade.time, trade.price));
        } else if let Some((entry_time, entry_price)) = self.open.take() {
            let profit = f64::from(before) * (trade.price - entry_price);
            trade.round_trip_profit = Some(profit);
            self.round_trips.push(RoundTrip {
                entry_time,
                exit_time: trade.time,
                entry_price,
                exit_price: trade.price,
                direction: before,
                profit,
                liquidation,
            });
        }
        self.position = Position(trade.position_after);
        self.trades.push(trade);
    }

    /// Acts on one prediction at bucket `time`.
    pub fn on_signal(&mut self, time: usize, dp: f64, threshold: f64, price: f64) {
        let (_, trade) = step(self.position, dp, threshold, price, time);
        if let Some(trade) = trade {
            self.record(trade, false);
        }
    }

    /// Closes any open position at `price`.
    pub fn liquidate(&mut self, time: usize, price: f64) {
        let side = match self.position.0 {
            1 => Side::Sell,
            -1 => Side::Buy,
            _ => return,
        };
        let trade = Trade {
            time,
            side,
            price,
            position_after: 0,
            round_trip_profit: None,
        };
        self.record(trade, true);
    }

    pub fn mark_to_market(&self, price: f64) -> f64 {
        self.cash + f64::from(self.position.0) * price
    }
}

/// Predicted price change for each decision bucket of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct DpStream {
    /// Bucket index of the first prediction.
    pub start: usize,
    pub dp: Vec<f64>,
}

impl DpStream {
    pub fn signal_crossings(&self, threshold: f64) -> usize {
        self.dp.iter().filter(|d| d.abs() > threshold).count()
    }
}

pub fn dp_stream(model: &PredictorModel, series: &PriceSeries) -> Result<DpStream> {
    let range = decision_range(series.len(), &model.banks)?;
    if range.is_empty() {
        return Err(Error::SeriesTooShort {
            needed: range.start + 2,
            available: series.len(),
        });
    }
    Ok(DpStream {
        start: range.start,
        dp: model.predict_range(series, range)?,
    })
}

/// Replays a prediction stream through the state machine. Trading happens
/// at each decision bucket's own price; whatever is open at the final bucket
/// is liquidated there.
pub fn simulate(stream: &DpStream, series: &PriceSeries, threshold: f64) -> Result<BacktestReport> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold {threshold} must be positive"
        )));
    }
    let end = stream.start + stream.dp.len();
    if stream.dp.is_empty() || end >= series.len() {
        return Err(Error::SeriesTooShort {
            needed: end + 1,
            available: series.len(),
        });
    }
    let last = series.len() - 1;
    let mut ledger = Ledger::new();
    let mut equity = Vec::with_capacity(series.len() - stream.start);
    for (i, &dp) in stream.dp.iter().enumerate() {
        let t = stream.start + i;
        ledger.on_signal(t, dp, threshold, series.prices[t]);
        equity.push((t, ledger.mark_to_market(series.prices[t])));
    }
    for t in end..last {
        equity.push((t, ledger.mark_to_market(series.prices[t])));
    }
    ledger.liquidate(last, series.prices[last]);
    equity.push((last, ledger.mark_to_market(series.prices[last])));

    Ok(BacktestReport::from_ledger(
        ledger,
        series,
        stream.start,
        &equity,
        threshold,
        stream.signal_crossings(threshold),
    ))
}

pub fn run_backtest(
    model: &PredictorModel,
    series: &PriceSeries,
    threshold: f64,
) -> Result<BacktestReport> {
    simulate(&dp_stream(model, series)?, series, threshold)
}

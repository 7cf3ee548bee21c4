//! Tick ingestion and coarsening onto a uniform time grid.
//!
//! Raw observations arrive as CSV rows carrying a trade price and either the
//! total bid/ask volume of the visible book or the individual levels. They are
//! mapped onto the next grid point at or after their timestamp; the last
//! observation in a bucket wins and empty buckets repeat the previous bucket.

use std::fs::File;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of book levels per side kept by the exchange feed.
pub const BOOK_DEPTH: usize = 60;

/// Default grid spacing in seconds.
pub const DEFAULT_INTERVAL: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub price: f64,
    pub volume: f64,
}

/// Visible order book at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BookSnapshot {
    /// Only the side totals are known.
    Totals { bid: f64, ask: f64 },
    /// Individual levels, best first.
    Depth { bids: Vec<Level>, asks: Vec<Level> },
}

impl BookSnapshot {
    /// Total volume on each side over the best `depth` levels.
    pub fn side_totals(&self, depth: usize) -> (f64, f64) {
        match self {
            BookSnapshot::Totals { bid, ask } => (*bid, *ask),
            BookSnapshot::Depth { bids, asks } => (
                bids.iter().take(depth).map(|l| l.volume).sum(),
                asks.iter().take(depth).map(|l| l.volume).sum(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub timestamp: f64,
    pub price: f64,
    pub book: BookSnapshot,
}

/// Order-book imbalance `(v_bid - v_ask) / (v_bid + v_ask)` over the best
/// `depth` levels per side. An empty book is neutral (0).
pub fn imbalance(book: &BookSnapshot, depth: usize) -> f64 {
    let (bid, ask) = book.side_totals(depth);
    imbalance_from_totals(bid, ask)
}

pub fn imbalance_from_totals(bid: f64, ask: f64) -> f64 {
    let total = bid + ask;
    if total > 0.0 {
        ((bid - ask) / total).clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

fn parse_f64(field: &str, line: u64, column: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("column `{column}`: `{field}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("column `{column}`: `{field}` is not finite"),
        });
    }
    Ok(v)
}

fn parse_levels(fields: &[&str], line: u64, side: &str, ascending: bool) -> Result<Vec<Level>> {
    let mut levels = Vec::with_capacity(fields.len() / 2);
    for (i, pair) in fields.chunks(2).enumerate() {
        let (px, vol) = (pair[0].trim(), pair[1].trim());
        if px.is_empty() && vol.is_empty() {
            continue;
        }
        let price = parse_f64(px, line, &format!("{side}_px_{}", i + 1))?;
        let volume = parse_f64(vol, line, &format!("{side}_vol_{}", i + 1))?;
        if volume < 0.0 {
            return Err(Error::Parse {
                line,
                message: format!("{side} level {} has negative volume", i + 1),
            });
        }
        if let Some(prev) = levels.last().map(|l: &Level| l.price) {
            let ordered = if ascending {
                price > prev
            } else {
                price < prev
            };
            if !ordered {
                return Err(Error::Parse {
                    line,
                    message: format!("{side} prices are not strictly monotone at level {}", i + 1),
                });
            }
        }
        levels.push(Level { price, volume });
    }
    Ok(levels)
}

/// Parses the tick CSV format: `timestamp,price,bid_vol_total,ask_vol_total`
/// optionally followed by `4 * L` level columns (`L <= 60`): `L` bid
/// `(price, volume)` pairs, best first, then `L` ask pairs. When levels are
/// present the totals columns may be left empty.
pub fn parse_ticks<R: Read>(reader: R) -> Result<Vec<TickRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Ok(Vec::new());
    }
    if headers.len() < 4 || headers[0].trim() != "timestamp" {
        return Err(Error::Parse {
            line: 1,
            message: "expected header `timestamp,price,bid_vol_total,ask_vol_total[,levels...]`"
                .into(),
        });
    }
    let extra = headers.len() - 4;
    if extra % 4 != 0 || extra / 4 > BOOK_DEPTH {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "{extra} level columns; expected a multiple of 4 covering at most {BOOK_DEPTH} levels per side"
            ),
        });
    }
    let levels_per_side = extra / 4;

    let mut ticks = Vec::new();
    let mut previous: Option<f64> = None;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let fields: Vec<&str> = record.iter().collect();

        let timestamp = parse_f64(fields[0], line, "timestamp")?;
        let price = parse_f64(fields[1], line, "price")?;
        if price <= 0.0 {
            return Err(Error::Parse {
                line,
                message: format!("price {price} must be positive"),
            });
        }
        if let Some(prev) = previous {
            if timestamp < prev {
                return Err(Error::DecreasingTimestamp {
                    line,
                    timestamp,
                    previous: prev,
                });
            }
        }
        previous = Some(timestamp);

        let book = if levels_per_side > 0 {
            let split = 4 + 2 * levels_per_side;
            BookSnapshot::Depth {
                bids: parse_levels(&fields[4..split], line, "bid", false)?,
                asks: parse_levels(&fields[split..], line, "ask", true)?,
            }
        } else {
            let bid = parse_f64(fields[2], line, "bid_vol_total")?;
            let ask = parse_f64(fields[3], line, "ask_vol_total")?;
            if bid < 0.0 || ask < 0.0 {
                return Err(Error::Parse {
                    line,
                    message: "volumes must be non-negative".into(),
                });
            }
            BookSnapshot::Totals { bid, ask }
        };
        ticks.push(TickRecord {
            timestamp,
            price,
            book,
        });
    }
    Ok(ticks)
}

pub fn read_ticks(path: &Path) -> Result<Vec<TickRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ticks(file)
}

/// Prices on a uniform grid with the book imbalance observed at each point.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub start_time: f64,
    pub interval: f64,
    pub prices: Vec<f64>,
    pub imbalances: Vec<f64>,
}

impl PriceSeries {
    pub fn new(
        start_time: f64,
        interval: f64,
        prices: Vec<f64>,
        imbalances: Vec<f64>,
    ) -> Result<Self> {
        if !(interval > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "interval {interval} must be positive"
            )));
        }
        if prices.len() != imbalances.len() {
            return Err(Error::DimensionMismatch {
                expected: prices.len(),
                actual: imbalances.len(),
            });
        }
        Ok(Self {
            start_time,
            interval,
            prices,
            imbalances,
        })
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn bucket_time(&self, index: usize) -> f64 {
        self.start_time + index as f64 * self.interval
    }

    /// Sub-series over a bucket range, keeping absolute bucket times.
    pub fn slice(&self, range: Range<usize>) -> PriceSeries {
        PriceSeries {
            start_time: self.bucket_time(range.start),
            interval: self.interval,
            prices: self.prices[range.clone()].to_vec(),
            imbalances: self.imbalances[range].to_vec(),
        }
    }

    /// Writes `bucket_time,price,imbalance`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bucket_time", "price", "imbalance"])?;
        for (i, (p, r)) in self.prices.iter().zip(&self.imbalances).enumerate() {
            w.write_record([
                self.bucket_time(i).to_string(),
                p.to_string(),
                r.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Reads the `bucket_time,price,imbalance` format. The grid interval is
    /// taken from the first two rows unless `interval` is given; rows must be
    /// evenly spaced.
    pub fn read_csv<R: Read>(reader: R, interval: Option<f64>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut times = Vec::new();
        let mut prices = Vec::new();
        let mut imbalances = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != 3 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 3 columns, found {}", record.len()),
                });
            }
            times.push(parse_f64(&record[0], line, "bucket_time")?);
            prices.push(parse_f64(&record[1], line, "price")?);
            imbalances.push(parse_f64(&record[2], line, "imbalance")?);
        }
        if times.is_empty() {
            return Err(Error::EmptyInput("price series has no rows"));
        }
        let interval = match interval {
            Some(i) => i,
            None if times.len() >= 2 => times[1] - times[0],
            None => DEFAULT_INTERVAL,
        };
        let series = PriceSeries::new(times[0], interval, prices, imbalances)?;
        for (i, t) in times.iter().enumerate() {
            let expected = series.bucket_time(i);
            if (t - expected).abs() > 1e-6 * interval.max(expected.abs()) {
                return Err(Error::Parse {
                    line: i as u64 + 2,
                    message: format!(
                        "bucket_time {t} breaks the {interval}s grid (expected {expected})"
                    ),
                });
            }
        }
        Ok(series)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), None)
    }
}

/// Index of the grid point at or after `t`. Timestamps within rounding
/// distance of a grid point map onto it.
fn bucket_index(t: f64, interval: f64) -> i64 {
    let q = t / interval;
    let r = q.round();
    if (q - r).abs() <= 1e-9 * q.abs().max(1.0) {
        r as i64
    } else {
        q.ceil() as i64
    }
}

/// Maps each tick onto the grid point `ceil(t / interval) * interval`; within
/// a bucket the last tick wins, and empty buckets carry the previous values.
pub fn coarsen(ticks: &[TickRecord], interval: f64) -> Result<PriceSeries> {
    if !(interval > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "interval {interval} must be positive"
        )));
    }
    let first = ticks
        .first()
        .ok_or(Error::EmptyInput("no ticks to coarsen"))?;
    let first_bucket = bucket_index(first.timestamp, interval);
    let last_bucket = bucket_index(ticks[ticks.len() - 1].timestamp, interval);
    if last_bucket < first_bucket {
        return Err(Error::InvalidArgument(
            "tick timestamps are not non-decreasing".into(),
        ));
    }
    let len = (last_bucket - first_bucket) as usize + 1;

    let mut slots: Vec<Option<(f64, f64)>> = vec![None; len];
    let mut prev_t = f64::NEG_INFINITY;
    for tick in ticks {
        if tick.timestamp < prev_t {
            return Err(Error::InvalidArgument(
                "tick timestamps are not non-decreasing".into(),
            ));
        }
        prev_t = tick.timestamp;
        let idx = (bucket_index(tick.timestamp, interval) - first_bucket) as usize;
        slots[idx] = Some((tick.price, imbalance(&tick.book, BOOK_DEPTH)));
    }

    let mut prices = Vec::with_capacity(len);
    let mut imbalances = Vec::with_capacity(len);
    let mut carry = slots[0].expect("first bucket holds the first tick");
    for slot in slots {
        if let Some(v) = slot {
            carry = v;
        }
        prices.push(carry.0);
        imbalances.push(carry.1);
    }
    PriceSeries::new(first_bucket as f64 * interval, interval, prices, imbalances)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tick(t: f64, price: f64, bid: f64, ask: f64) -> TickRecord {
        TickRecord {
            timestamp: t,
            price,
            book: BookSnapshot::Totals { bid, ask },
        }
    }

    #[test]
    fn empty_stream_parses_to_nothing() {
        assert!(parse_ticks("".as_bytes()).unwrap().is_empty());
        let header_only = "timestamp,price,bid_vol_total,ask_vol_total\n";
        assert!(parse_ticks(header_only.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn single_row() {
        let csv = "timestamp,price,bid_vol_total,ask_vol_total\n12.4,3500.5,30,10\n";
        let ticks = parse_ticks(csv.as_bytes()).unwrap();
        assert_eq!(ticks, vec![tick(12.4, 3500.5, 30.0, 10.0)]);
    }

    #[test]
    fn bad_price_names_line() {
        let csv = "timestamp,price,bid_vol_total,ask_vol_total\n1,100,1,1\n2,abc,1,1\n";
        match parse_ticks(csv.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn decreasing_timestamp_rejected() {
        let csv = "timestamp,price,bid_vol_total,ask_vol_total\n5,100,1,1\n4,100,1,1\n";
        assert!(matches!(
            parse_ticks(csv.as_bytes()),
            Err(Error::DecreasingTimestamp { line: 3, .. })
        ));
    }

    #[test]
    fn extended_levels() {
        let csv = "timestamp,price,bid_vol_total,ask_vol_total,b1p,b1v,b2p,b2v,a1p,a1v,a2p,a2v\n\
                   1,100,,,99.5,10,99,20,100.5,5,101,5\n\
                   2,100,,,99.5,10,,,100.5,5,101,5\n";
        let ticks = parse_ticks(csv.as_bytes()).unwrap();
        assert_eq!(ticks.len(), 2);
        assert_eq!(imbalance(&ticks[0].book, BOOK_DEPTH), 0.5);
        assert_eq!(imbalance(&ticks[0].book, 1), (10.0 - 5.0) / 15.0);
        assert_eq!(imbalance(&ticks[1].book, BOOK_DEPTH), 0.0);
    }

    #[test]
    fn unordered_levels_rejected() {
        let csv = "timestamp,price,bid_vol_total,ask_vol_total,b1p,b1v,b2p,b2v,a1p,a1v,a2p,a2v\n\
                   1,100,,,99,10,99.5,20,100.5,5,101,5\n";
        assert!(matches!(
            parse_ticks(csv.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn imbalance_cases() {
        let book = |bid, ask| BookSnapshot::Totals { bid, ask };
        assert_eq!(imbalance(&book(30.0, 10.0), BOOK_DEPTH), 0.5);
        assert_eq!(imbalance(&book(7.0, 7.0), BOOK_DEPTH), 0.0);
        assert_eq!(imbalance(&book(0.0, 10.0), BOOK_DEPTH), -1.0);
        assert_eq!(imbalance(&book(0.0, 0.0), BOOK_DEPTH), 0.0);
    }

    #[test]
    fn future_grid_point() {
        assert_eq!(bucket_index(12.4, 10.0), 2);
        assert_eq!(bucket_index(10.0, 10.0), 1);
        assert_eq!(bucket_index(0.0, 10.0), 0);
        assert_eq!(bucket_index(0.1 + 0.2, 0.1), 3);

        let s = coarsen(&[tick(12.4, 100.0, 1.0, 1.0)], 10.0).unwrap();
        assert_eq!(s.start_time, 20.0);
        let s = coarsen(&[tick(10.0, 100.0, 1.0, 1.0)], 10.0).unwrap();
        assert_eq!(s.start_time, 10.0);
    }

    #[test]
    fn last_tick_in_bucket_wins() {
        let ticks = [tick(3.0, 100.0, 1.0, 0.0), tick(7.0, 101.0, 0.0, 1.0)];
        // replay: both map to grid point 10; the later one overwrites
        let mut expected = None;
        for t in &ticks {
            if bucket_index(t.timestamp, 10.0) == 1 {
                expected = Some(t.price);
            }
        }
        let s = coarsen(&ticks, 10.0).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(Some(s.prices[0]), expected);
        assert_eq!(s.prices[0], 101.0);
        assert_eq!(s.imbalances[0], -1.0);
    }

    #[test]
    fn gaps_carry_forward() {
        let ticks = [tick(1.0, 100.0, 3.0, 1.0), tick(41.0, 105.0, 1.0, 1.0)];
        let s = coarsen(&ticks, 10.0).unwrap();
        assert_eq!(s.start_time, 10.0);
        assert_eq!(s.prices, vec![100.0, 100.0, 100.0, 100.0, 105.0]);
        assert_eq!(s.imbalances, vec![0.5, 0.5, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn coarsen_empty_is_error() {
        assert!(matches!(coarsen(&[], 10.0), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn series_csv_roundtrip() {
        let s =
            PriceSeries::new(20.0, 10.0, vec![100.0, 100.5, 99.25], vec![0.0, 0.5, -1.0]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("bucket_time,price,imbalance\n20,100,0\n"));
        assert_eq!(PriceSeries::read_csv(buf.as_slice(), None).unwrap(), s);
    }

    #[test]
    fn series_csv_rejects_uneven_grid() {
        let text = "bucket_time,price,imbalance\n0,1,0\n10,1,0\n25,1,0\n";
        assert!(PriceSeries::read_csv(text.as_bytes(), None).is_err());
    }
}

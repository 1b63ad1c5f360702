use std::path::Path;

use serde::Deserialize;

use crate::{Error, Result};

/// One OHLCV record. Prices in USD, volume in BTC.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct Candle {
    pub timestamp: i64,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Candle {
    pub fn is_valid(&self) -> bool {
        let prices = [self.open, self.high, self.low, self.close];
        prices.iter().all(|p| p.is_finite() && *p > 0.0)
            && self.volume.is_finite()
            && self.volume >= 0.0
            && self.low <= self.open
            && self.open <= self.high
            && self.low <= self.close
            && self.close <= self.high
    }
}

/// Strictly time-ordered, non-empty candle history.
#[derive(Debug, Clone, PartialEq)]
pub struct CandleSeries {
    candles: Vec<Candle>,
}

impl CandleSeries {
    /// Sorts by timestamp and validates. Invalid candles are dropped and
    /// their count returned alongside the series.
    pub fn from_candles(candles: Vec<Candle>) -> Result<(Self, usize)> {
        let total = candles.len();
        let mut kept: Vec<Candle> = candles.into_iter().filter(Candle::is_valid).collect();
        let dropped = total - kept.len();
        if kept.is_empty() {
            return Err(Error::NoValidRows {
                path: Default::default(),
                dropped,
            });
        }
        kept.sort_by_key(|c| c.timestamp);
        let dups: Vec<i64> = kept
            .windows(2)
            .filter(|w| w[0].timestamp == w[1].timestamp)
            .map(|w| w[1].timestamp)
            .collect();
        if let Some(&first) = dups.first() {
            return Err(Error::DuplicateTimestamps {
                count: dups.len(),
                first,
            });
        }
        Ok((Self { candles: kept }, dropped))
    }

    pub fn candles(&self) -> &[Candle] {
        &self.candles
    }

    pub fn len(&self) -> usize {
        self.candles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candles.is_empty()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.candles.iter().map(|c| c.close).collect()
    }

    pub fn timestamps(&self) -> Vec<i64> {
        self.candles.iter().map(|c| c.timestamp).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadReport {
    pub series: CandleSeries,
    /// Rows that failed to parse or violated the OHLCV invariants.
    pub dropped: usize,
}

#[derive(Debug, Deserialize)]
struct RawRow {
    timestamp: String,
    open: String,
    high: String,
    low: String,
    close: String,
    volume: String,
}

impl RawRow {
    fn parse(&self) -> Option<Candle> {
        let f = |s: &str| s.trim().parse::<f64>().ok();
        Some(Candle {
            timestamp: self.timestamp.trim().parse().ok()?,
            open: f(&self.open)?,
            high: f(&self.high)?,
            low: f(&self.low)?,
            close: f(&self.close)?,
            volume: f(&self.volume)?,
        })
    }
}

/// Reads a `timestamp,open,high,low,close,volume` CSV (extra columns and any
/// column order are accepted).
pub fn load_candles(path: impl AsRef<Path>) -> Result<LoadReport> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse(format!("{other:?}")),
        })?;

    let mut candles = Vec::new();
    let mut unparsed = 0usize;
    for row in reader.deserialize::<RawRow>() {
        match row {
            Ok(raw) => match raw.parse() {
                Some(c) => candles.push(c),
                None => unparsed += 1,
            },
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(_) => unparsed += 1,
        }
    }

    match CandleSeries::from_candles(candles) {
        Ok((series, invalid)) => Ok(LoadReport {
            series,
            dropped: invalid + unparsed,
        }),
        Err(Error::NoValidRows { dropped, .. }) => Err(Error::NoValidRows {
            path: path.to_path_buf(),
            dropped: dropped + unparsed,
        }),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    const HEADER: &str = "timestamp,open,high,low,close,volume\n";

    #[test]
    fn loads_well_formed_rows() {
        let f = write_csv(&format!(
            "{HEADER}1,10,11,9,10.5,1\n2,10.5,12,10,11,2\n3,11,11.5,10.5,11.2,0\n"
        ));
        let r = load_candles(f.path()).unwrap();
        assert_eq!(r.series.len(), 3);
        assert_eq!(r.dropped, 0);
        assert_eq!(r.series.timestamps(), vec![1, 2, 3]);
    }

    #[test]
    fn sorts_out_of_order_rows() {
        let f = write_csv(&format!(
            "{HEADER}3,11,11.5,10.5,11.2,0\n1,10,11,9,10.5,1\n2,10.5,12,10,11,2\n"
        ));
        let r = load_candles(f.path()).unwrap();
        assert_eq!(r.series.timestamps(), vec![1, 2, 3]);
        assert_eq!(r.series.closes(), vec![10.5, 11.0, 11.2]);
    }

    #[test]
    fn drops_close_above_high() {
        let f = write_csv(&format!("{HEADER}1,10,11,9,10.5,1\n2,10.5,12,10,13,2\n"));
        let r = load_candles(f.path()).unwrap();
        assert_eq!(r.series.len(), 1);
        assert_eq!(r.dropped, 1);
    }

    #[test]
    fn drops_unparseable_rows_and_accepts_extra_columns() {
        let f = write_csv(
            "date,timestamp,open,high,low,close,volume\nx,1,10,11,9,10.5,1\ny,2,abc,12,10,11,2\n",
        );
        let r = load_candles(f.path()).unwrap();
        assert_eq!(r.series.len(), 1);
        assert_eq!(r.dropped, 1);
    }

    #[test]
    fn rejects_duplicates() {
        let f = write_csv(&format!(
            "{HEADER}1,10,11,9,10.5,1\n1,10,11,9,10.5,1\n2,10,11,9,10.5,1\n2,10,11,9,10.5,1\n"
        ));
        match load_candles(f.path()) {
            Err(Error::DuplicateTimestamps { count, first }) => {
                assert_eq!(count, 2);
                assert_eq!(first, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_all_invalid_and_missing_file() {
        let f = write_csv(&format!("{HEADER}1,10,11,9,20,1\n"));
        assert!(matches!(
            load_candles(f.path()),
            Err(Error::NoValidRows { dropped: 1, .. })
        ));
        assert!(matches!(
            load_candles("/nonexistent/candles.csv"),
            Err(Error::Io { .. })
        ));
    }
}

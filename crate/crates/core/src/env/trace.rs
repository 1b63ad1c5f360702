use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::action::ActionKind;
use crate::config::parse_key_values;
use crate::{Error, Result};

pub const TRACE_HEADER: &str =
    "step,timestamp,close,action_kind,level,exec_price,quantity,fee,cash,holdings,net_worth,reward";

/// One executed step. `close`, `timestamp` and `net_worth` refer to the
/// candle the portfolio is marked at after the trade; `level` is 0 for
/// strategy orders given in BTC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub timestamp: i64,
    pub close: f64,
    pub action_kind: ActionKind,
    pub level: usize,
    pub exec_price: f64,
    pub quantity: f64,
    pub fee: f64,
    pub cash: f64,
    pub holdings: f64,
    pub net_worth: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub initial_cash: f64,
    pub rows: Vec<TraceRow>,
}

impl EpisodeTrace {
    pub fn final_net_worth(&self) -> Option<f64> {
        self.rows.last().map(|r| r.net_worth)
    }

    /// Floats use the shortest round-tripping representation, so a parsed
    /// trace is bit-identical to the original.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# initial_cash = {}", self.initial_cash);
        s.push_str(TRACE_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.step,
                r.timestamp,
                r.close,
                r.action_kind,
                r.level,
                r.exec_price,
                r.quantity,
                r.fee,
                r.cash,
                r.holdings,
                r.net_worth,
                r.reward
            );
        }
        s
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let comments: String = text
            .lines()
            .filter_map(|l| l.trim_start().strip_prefix('#'))
            .map(|l| format!("{l}\n"))
            .collect();
        let kv = parse_key_values(&comments)?;
        let initial_cash = kv
            .get("initial_cash")
            .ok_or_else(|| Error::Parse("trace lacks an initial_cash comment".into()))?
            .parse::<f64>()
            .map_err(|e| Error::Parse(format!("initial_cash: {e}")))?;

        #[derive(Deserialize)]
        struct Raw {
            step: usize,
            timestamp: i64,
            close: f64,
            action_kind: String,
            level: usize,
            exec_price: f64,
            quantity: f64,
            fee: f64,
            cash: f64,
            holdings: f64,
            net_worth: f64,
            reward: f64,
        }
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for rec in rdr.deserialize::<Raw>() {
            let r = rec?;
            rows.push(TraceRow {
                step: r.step,
                timestamp: r.timestamp,
                close: r.close,
                action_kind: r.action_kind.parse()?,
                level: r.level,
                exec_price: r.exec_price,
                quantity: r.quantity,
                fee: r.fee,
                cash: r.cash,
                holdings: r.holdings,
                net_worth: r.net_worth,
                reward: r.reward,
            });
        }
        Ok(Self { initial_cash, rows })
    }
}

pub fn write_trace(trace: &EpisodeTrace, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, trace.to_csv_string()).map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<EpisodeTrace> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EpisodeTrace::from_csv_str(&text)
}

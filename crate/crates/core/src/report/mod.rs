//! Profit rates, comparison tables and trade plots.

mod plot;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::env::EpisodeTrace;
use crate::{Error, Result};

pub use plot::{render_trade_plot, trade_plot_svg};

/// `(final net worth - initial cash) / initial cash * 100`.
pub fn profit_rate(trace: &EpisodeTrace) -> Result<f64> {
    let last = trace
        .final_net_worth()
        .ok_or_else(|| Error::invalid("empty trace"))?;
    Ok((last - trace.initial_cash) / trace.initial_cash * 100.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub strategy: String,
    pub profit_rate: f64,
}

/// Rows sorted by profit rate, best first; equal rates by name.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

pub const COMPARISON_HEADER: &str = "strategy,profit_rate_pct";

pub fn build_comparison(traces: &[(String, EpisodeTrace)]) -> Result<ComparisonTable> {
    if traces.is_empty() {
        return Err(Error::invalid("no traces to compare"));
    }
    let mut seen = BTreeSet::new();
    let mut rows = Vec::with_capacity(traces.len());
    for (name, trace) in traces {
        if !seen.insert(name.as_str()) {
            return Err(Error::invalid(format!("duplicate strategy name {name:?}")));
        }
        rows.push(ComparisonRow {
            strategy: name.clone(),
            profit_rate: profit_rate(trace)?,
        });
    }
    rows.sort_by(|a, b| {
        b.profit_rate
            .total_cmp(&a.profit_rate)
            .then_with(|| a.strategy.cmp(&b.strategy))
    });
    Ok(ComparisonTable { rows })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl ComparisonTable {
    /// Two decimals.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(COMPARISON_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.2}", csv_field(&r.strategy), r.profit_rate);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::Parse(format!("comparison row {rec:?}")));
            }
            rows.push(ComparisonRow {
                strategy: rec[0].to_string(),
                profit_rate: rec[1]
                    .trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("profit rate {:?}: {e}", &rec[1])))?,
            });
        }
        Ok(Self { rows })
    }

    pub fn to_text(&self) -> String {
        let title = "Strategy";
        let width = self
            .rows
            .iter()
            .map(|r| r.strategy.chars().count())
            .max()
            .unwrap_or(0)
            .max(title.len());
        let mut s = String::new();
        let _ = writeln!(s, "{title:<width$}  Profit Rate / %");
        let _ = writeln!(s, "{}  {}", "-".repeat(width), "-".repeat(15));
        for r in &self.rows {
            let _ = writeln!(s, "{:<width$}  {:>15.2}", r.strategy, r.profit_rate);
        }
        s
    }
}

/// Inputs for one report directory.
#[derive(Debug, Clone)]
pub struct RunInputs<'a> {
    /// `(file stem, table label, trace)`
    pub traces: Vec<(String, String, EpisodeTrace)>,
    pub training_log: Option<&'a str>,
    pub config_echo: Option<&'a str>,
    pub seed: u64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub table: ComparisonTable,
    pub plots: Vec<PathBuf>,
    pub missing: Vec<String>,
}

/// Writes `comparison.csv`, one SVG per trace and `report.txt` into `dir`.
/// Missing optional inputs are listed in the report rather than failing it.
pub fn summarize_run(dir: &Path, inputs: &RunInputs<'_>) -> Result<RunSummary> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let labelled: Vec<(String, EpisodeTrace)> = inputs
        .traces
        .iter()
        .map(|(_, label, t)| (label.clone(), t.clone()))
        .collect();
    let table = build_comparison(&labelled)?;
    let csv_path = dir.join("comparison.csv");
    fs::write(&csv_path, table.to_csv()).map_err(|e| Error::io(&csv_path, e))?;

    let mut plots = Vec::new();
    for (stem, label, trace) in &inputs.traces {
        let path = dir.join(format!("{stem}.svg"));
        render_trade_plot(trace, label, &path)?;
        plots.push(path);
    }

    let mut missing = Vec::new();
    if inputs.training_log.is_none() {
        missing.push("training log".to_string());
    }
    if inputs.config_echo.is_none() {
        missing.push("config echo".to_string());
    }

    let mut s = String::new();
    let _ = writeln!(s, "Backtest report");
    let _ = writeln!(s, "seed: {}", inputs.seed);
    let _ = writeln!(s);
    s.push_str(&table.to_text());
    let _ = writeln!(s);
    if let Some(best) = table.rows.first() {
        let _ = writeln!(s, "Differences to the best row ({}):", best.strategy);
        for r in &table.rows[1..] {
            let _ = writeln!(
                s,
                "  {}: {:+.2} percentage points",
                r.strategy,
                r.profit_rate - best.profit_rate
            );
        }
        let _ = writeln!(s);
    }
    let _ = writeln!(s, "Plots:");
    for p in &plots {
        let name = p
            .file_name()
            .map(|n| n.to_string_lossy())
            .unwrap_or_default();
        let _ = writeln!(s, "  {name}");
    }
    let _ = writeln!(s);
    match inputs.training_log {
        Some(log) => {
            let lines: Vec<&str> = log.lines().filter(|l| !l.trim().is_empty()).collect();
            let _ = writeln!(
                s,
                "Training log: {} iterations",
                lines.len().saturating_sub(1)
            );
            if let (Some(h), Some(last)) = (lines.first(), lines.last().filter(|_| lines.len() > 1))
            {
                let _ = writeln!(s, "  {h}");
                let _ = writeln!(s, "  {last}");
            }
        }
        None => {
            let _ = writeln!(s, "Training log: MISSING");
        }
    }
    for n in &inputs.notes {
        let _ = writeln!(s, "note: {n}");
    }
    let _ = writeln!(s);
    match inputs.config_echo {
        Some(cfg) => {
            let _ = writeln!(s, "Config:");
            for l in cfg.lines() {
                let _ = writeln!(s, "  {l}");
            }
        }
        None => {
            let _ = writeln!(s, "Config: MISSING");
        }
    }
    let path = dir.join("report.txt");
    fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
    Ok(RunSummary {
        table,
        plots,
        missing,
    })
}

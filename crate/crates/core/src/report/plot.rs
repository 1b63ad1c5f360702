use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::env::{ActionKind, EpisodeTrace};
use crate::{Error, Result};

const W: f64 = 900.0;
const H: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 80.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

struct Scale {
    lo: f64,
    hi: f64,
}

impl Scale {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Self { lo: 0.0, hi: 1.0 };
        }
        if hi - lo < 1e-9 * hi.abs().max(1.0) {
            let pad = hi.abs().max(1.0) * 0.01;
            lo -= pad;
            hi += pad;
        }
        Self { lo, hi }
    }

    fn y(&self, v: f64) -> f64 {
        TOP + (H - TOP - BOTTOM) * (1.0 - (v - self.lo) / (self.hi - self.lo))
    }
}

fn x_of(i: usize, n: usize) -> f64 {
    let span = (n.max(2) - 1) as f64;
    LEFT + (W - LEFT - RIGHT) * i as f64 / span
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Price (gray, right axis) and net worth (green, left axis) per step, with a
/// green dot for every executed buy and a red dot for every executed sell.
pub fn trade_plot_svg(trace: &EpisodeTrace, title: &str) -> String {
    let rows = &trace.rows;
    let n = rows.len();
    let price = Scale::of(rows.iter().flat_map(|r| [r.close, r.exec_price]));
    let worth = Scale::of(rows.iter().map(|r| r.net_worth));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    // frame and axis labels
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(
        s,
        r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y1 - y0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">step</text>"#,
        (x0 + x1) / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {:.2})" text-anchor="middle" fill="green">net worth (USD)</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" transform="rotate(90 {:.2} {:.2})" text-anchor="middle" fill="gray">price (USD)</text>"#,
        W - 16.0,
        (y0 + y1) / 2.0,
        W - 16.0,
        (y0 + y1) / 2.0
    );
    for (v, y) in [(worth.lo, y1), (worth.hi, y0)] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="end" fill="green">{v:.2}</text>"#,
            x0 - 4.0,
            y + 3.0
        );
    }
    for (v, y) in [(price.lo, y1), (price.hi, y0)] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" fill="gray">{v:.2}</text>"#,
            x1 + 4.0,
            y + 3.0
        );
    }
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        for (step, x) in [(first.step, x0), (last.step, x1)] {
            let _ = writeln!(
                s,
                r#"<text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="middle">{step}</text>"#,
                y1 + 14.0
            );
        }
    }

    let polyline = |s: &mut String,
                    color: &str,
                    class: &str,
                    pts: &mut dyn Iterator<Item = (f64, f64)>| {
        let mut d = String::new();
        for (x, y) in pts {
            let _ = write!(d, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            s,
            r#"<polyline class="{class}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            d.trim_end()
        );
    };
    polyline(
        &mut s,
        "gray",
        "price",
        &mut rows
            .iter()
            .enumerate()
            .map(|(i, r)| (x_of(i, n), price.y(r.close))),
    );
    polyline(
        &mut s,
        "green",
        "net-worth",
        &mut rows
            .iter()
            .enumerate()
            .map(|(i, r)| (x_of(i, n), worth.y(r.net_worth))),
    );
    for (i, r) in rows.iter().enumerate() {
        if r.quantity <= 0.0 {
            continue;
        }
        let (class, color) = match r.action_kind {
            ActionKind::Buy => ("buy", "green"),
            ActionKind::Sell => ("sell", "red"),
            ActionKind::Hold => continue,
        };
        let _ = writeln!(
            s,
            r#"<circle class="{class}" cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#,
            x_of(i, n),
            price.y(r.exec_price)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn render_trade_plot(trace: &EpisodeTrace, title: &str, path: &Path) -> Result<()> {
    fs::write(path, trade_plot_svg(trace, title)).map_err(|e| Error::io(path, e))
}

//! Preprocessing driver and on-disk artifacts: `timestamp,value` CSVs plus a
//! key-value sidecar holding everything needed to invert the transforms.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{
    adf_test, chronological_split, difference, normalize_value, AdfResult, CandleSeries, DiffState,
    NormalizationParams, SplitSpec,
};
use crate::config::parse_key_values;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessOptions {
    pub split: SplitSpec,
    pub y_min: f64,
    pub y_max: f64,
    pub adf_lag: usize,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            split: SplitSpec::default(),
            y_min: 0.0,
            y_max: 1.0,
            adf_lag: 0,
        }
    }
}

/// Aligned per-candle columns for one contiguous stretch of history.
///
/// `features[t]` is the scaled close-to-close change ending at candle `t`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MarketData {
    pub timestamps: Vec<i64>,
    pub closes: Vec<f64>,
    pub features: Vec<f64>,
}

impl MarketData {
    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }

    /// Builds a segment from raw closes; features are the unscaled diffs,
    /// with a zero for the first candle.
    pub fn from_closes(timestamps: Vec<i64>, closes: Vec<f64>) -> Self {
        let mut features = Vec::with_capacity(closes.len());
        features.push(0.0);
        features.extend(closes.windows(2).map(|w| w[1] - w[0]));
        features.truncate(closes.len());
        Self {
            timestamps,
            closes,
            features,
        }
    }

    fn check(&self) -> Result<()> {
        if self.timestamps.len() != self.closes.len() || self.features.len() != self.closes.len() {
            return Err(Error::Shape(format!(
                "market data columns disagree: {} timestamps, {} closes, {} features",
                self.timestamps.len(),
                self.closes.len(),
                self.features.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub diff_state: DiffState,
    pub normalization: NormalizationParams,
    pub adf: Option<AdfResult>,
    pub warnings: Vec<String>,
    pub train: MarketData,
    pub valid: MarketData,
    pub test: MarketData,
}

/// Differences the closes, checks stationarity, splits chronologically and
/// scales with parameters fit on the training split only.
///
/// The first candle is consumed by differencing; every remaining candle keeps
/// its raw close next to its scaled change.
pub fn prepare(series: &CandleSeries, opts: &PreprocessOptions) -> Result<PreparedData> {
    let closes = series.closes();
    let timestamps = series.timestamps();
    let (diffs, diff_state) = difference(&closes)?;

    let mut warnings = Vec::new();
    let adf = match adf_test(&diffs, opts.adf_lag) {
        Ok(r) => {
            if !r.reject_unit_root {
                warnings.push(format!(
                    "ADF does not reject a unit root in the differenced closes (t = {:.4}, 5% critical value {:.4})",
                    r.t_statistic, r.critical_value_5pct
                ));
            }
            Some(r)
        }
        Err(e) => {
            warnings.push(format!("ADF test could not run: {e}"));
            None
        }
    };

    let rows: Vec<usize> = (1..closes.len()).collect();
    let (train_rows, valid_rows, test_rows) = chronological_split(&rows, &opts.split)?;

    let train_diffs: Vec<f64> = train_rows.iter().map(|&i| diffs[i - 1]).collect();
    let (_, normalization) = super::minmax_normalize(&train_diffs, opts.y_min, opts.y_max)?;

    let segment = |idx: &[usize]| MarketData {
        timestamps: idx.iter().map(|&i| timestamps[i]).collect(),
        closes: idx.iter().map(|&i| closes[i]).collect(),
        features: idx
            .iter()
            .map(|&i| normalize_value(diffs[i - 1], &normalization))
            .collect(),
    };

    Ok(PreparedData {
        diff_state,
        normalization,
        adf,
        warnings,
        train: segment(train_rows),
        valid: segment(valid_rows),
        test: segment(test_rows),
    })
}

pub fn write_value_csv(path: &Path, timestamps: &[i64], values: &[f64]) -> Result<()> {
    if timestamps.len() != values.len() {
        return Err(Error::Shape(
            "timestamps and values differ in length".into(),
        ));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["timestamp", "value"])?;
    for (t, v) in timestamps.iter().zip(values) {
        w.write_record([t.to_string(), v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_value_csv(path: &Path) -> Result<(Vec<i64>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{other:?}")),
    })?;
    let mut ts = Vec::new();
    let mut vs = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse_err = || Error::Parse(format!("bad row in {}: {rec:?}", path.display()));
        ts.push(
            rec.get(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(parse_err)?,
        );
        vs.push(
            rec.get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(parse_err)?,
        );
    }
    Ok((ts, vs))
}

/// Key-value sidecar with the inverse-transform state.
#[derive(Debug, Clone, PartialEq)]
pub struct Sidecar {
    pub diff_state: DiffState,
    pub normalization: NormalizationParams,
    pub extra: BTreeMap<String, String>,
}

pub fn write_sidecar(path: &Path, sidecar: &Sidecar) -> Result<()> {
    let mut out = String::new();
    let n = &sidecar.normalization;
    let _ = writeln!(out, "seed_value = {}", sidecar.diff_state.seed_value);
    let _ = writeln!(out, "origin_min = {}", n.origin_min);
    let _ = writeln!(out, "origin_max = {}", n.origin_max);
    let _ = writeln!(out, "y_min = {}", n.y_min);
    let _ = writeln!(out, "y_max = {}", n.y_max);
    for (k, v) in &sidecar.extra {
        let _ = writeln!(out, "{k} = {v}");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = parse_key_values(&text)?;
    let mut take = |k: &str| -> Result<f64> {
        let v = map
            .remove(k)
            .ok_or_else(|| Error::Parse(format!("sidecar missing key {k}")))?;
        v.parse()
            .map_err(|_| Error::Parse(format!("sidecar key {k}: bad number {v:?}")))
    };
    let diff_state = DiffState {
        seed_value: take("seed_value")?,
    };
    let normalization = NormalizationParams::new(
        take("origin_min")?,
        take("origin_max")?,
        take("y_min")?,
        take("y_max")?,
    )?;
    Ok(Sidecar {
        diff_state,
        normalization,
        extra: map,
    })
}

impl PreparedData {
    /// Writes `<split>_close.csv`, `<split>_feature.csv` and `preprocess.txt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, seg) in [
            ("train", &self.train),
            ("valid", &self.valid),
            ("test", &self.test),
        ] {
            write_value_csv(
                &dir.join(format!("{name}_close.csv")),
                &seg.timestamps,
                &seg.closes,
            )?;
            write_value_csv(
                &dir.join(format!("{name}_feature.csv")),
                &seg.timestamps,
                &seg.features,
            )?;
        }
        let mut extra = BTreeMap::new();
        if let Some(adf) = &self.adf {
            extra.insert("adf_t_statistic".into(), adf.t_statistic.to_string());
            extra.insert(
                "adf_critical_5pct".into(),
                adf.critical_value_5pct.to_string(),
            );
            extra.insert(
                "adf_reject_unit_root".into(),
                adf.reject_unit_root.to_string(),
            );
            extra.insert("adf_lag_order".into(), adf.lag_order.to_string());
        }
        write_sidecar(
            &dir.join("preprocess.txt"),
            &Sidecar {
                diff_state: self.diff_state,
                normalization: self.normalization,
                extra,
            },
        )
    }

    /// Inverse of [`PreparedData::save`]. ADF details are not reloaded.
    pub fn load(dir: &Path) -> Result<Self> {
        let sidecar = read_sidecar(&dir.join("preprocess.txt"))?;
        let load_seg = |name: &str| -> Result<MarketData> {
            let (timestamps, closes) = read_value_csv(&dir.join(format!("{name}_close.csv")))?;
            let (ts2, features) = read_value_csv(&dir.join(format!("{name}_feature.csv")))?;
            if ts2 != timestamps {
                return Err(Error::Shape(format!(
                    "{name} close/feature timestamps differ"
                )));
            }
            let seg = MarketData {
                timestamps,
                closes,
                features,
            };
            seg.check()?;
            Ok(seg)
        };
        Ok(Self {
            diff_state: sidecar.diff_state,
            normalization: sidecar.normalization,
            adf: None,
            warnings: Vec::new(),
            train: load_seg("train")?,
            valid: load_seg("valid")?,
            test: load_seg("test")?,
        })
    }
}

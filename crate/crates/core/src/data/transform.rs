use crate::{Error, Result};

/// State needed to undo first-order differencing: the dropped first value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffState {
    pub seed_value: f64,
}

/// Min-max scaling parameters. `origin_*` are the extrema of the data the
/// scaler was fit on; `y_*` bound the target range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationParams {
    pub origin_min: f64,
    pub origin_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl NormalizationParams {
    pub fn new(origin_min: f64, origin_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let p = Self {
            origin_min,
            origin_max,
            y_min,
            y_max,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.origin_min, self.origin_max, self.y_min, self.y_max];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("normalization params {self:?}")));
        }
        if self.origin_max <= self.origin_min {
            return Err(Error::ConstantSeries(self.origin_min));
        }
        if self.y_max <= self.y_min {
            return Err(Error::invalid(format!(
                "target range [{}, {}] is empty",
                self.y_min, self.y_max
            )));
        }
        Ok(())
    }
}

/// `diffs[i] = values[i + 1] - values[i]`.
pub fn difference(values: &[f64]) -> Result<(Vec<f64>, DiffState)> {
    if values.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: values.len(),
        });
    }
    if !values[0].is_finite() {
        return Err(Error::NonFinite("difference seed".into()));
    }
    let diffs = values.windows(2).map(|w| w[1] - w[0]).collect();
    Ok((
        diffs,
        DiffState {
            seed_value: values[0],
        },
    ))
}

/// Running sum of `diffs` starting from the seed value.
pub fn invert_difference(diffs: &[f64], state: DiffState) -> Result<Vec<f64>> {
    if !state.seed_value.is_finite() {
        return Err(Error::NonFinite("difference seed".into()));
    }
    let mut out = Vec::with_capacity(diffs.len() + 1);
    let mut acc = state.seed_value;
    out.push(acc);
    for d in diffs {
        acc += d;
        out.push(acc);
    }
    Ok(out)
}

#[inline]
pub fn normalize_value(v: f64, p: &NormalizationParams) -> f64 {
    (p.y_max - p.y_min) * (v - p.origin_min) / (p.origin_max - p.origin_min) + p.y_min
}

#[inline]
pub fn denormalize_value(v: f64, p: &NormalizationParams) -> f64 {
    (v - p.y_min) / (p.y_max - p.y_min) * (p.origin_max - p.origin_min) + p.origin_min
}

/// Fits min-max parameters on `values` and scales them into `[y_min, y_max]`.
pub fn minmax_normalize(
    values: &[f64],
    y_min: f64,
    y_max: f64,
) -> Result<(Vec<f64>, NormalizationParams)> {
    if values.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("normalize input".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(Error::ConstantSeries(lo));
    }
    let params = NormalizationParams::new(lo, hi, y_min, y_max)?;
    let out = values
        .iter()
        .map(|&v| normalize_value(v, &params).clamp(y_min, y_max))
        .collect();
    Ok((out, params))
}

pub fn denormalize(normalized: &[f64], params: &NormalizationParams) -> Result<Vec<f64>> {
    if params.y_max == params.y_min {
        return Err(Error::invalid("y_max equals y_min"));
    }
    params.validate()?;
    Ok(normalized
        .iter()
        .map(|&v| denormalize_value(v, params))
        .collect())
}

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            valid_fraction: 0.1,
            test_fraction: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let f = [self.train_fraction, self.valid_fraction, self.test_fraction];
        if f.iter().any(|x| !(*x > 0.0 && *x < 1.0)) {
            return Err(Error::invalid(format!(
                "split fractions must lie in (0, 1): {f:?}"
            )));
        }
        let sum: f64 = f.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "split fractions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    /// Sizes of (train, valid, test) for a series of length `n`.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let train = (self.train_fraction * n as f64).floor() as usize;
        let valid = (self.valid_fraction * n as f64).floor() as usize;
        (train, valid, n - train - valid)
    }
}

/// Contiguous prefix / middle / suffix split; never reorders.
pub fn chronological_split<'a, T>(
    series: &'a [T],
    spec: &SplitSpec,
) -> Result<(&'a [T], &'a [T], &'a [T])> {
    spec.validate()?;
    if series.len() < 10 {
        return Err(Error::TooShort {
            needed: 10,
            got: series.len(),
        });
    }
    let (train, valid, _) = spec.sizes(series.len());
    let (a, rest) = series.split_at(train);
    let (b, c) = rest.split_at(valid);
    Ok((a, b, c))
}

/// A supervised pair: `step` consecutive values and the value that follows.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub input: Vec<f64>,
    pub target: f64,
}

pub fn make_windows(values: &[f64], step: usize) -> Result<Vec<Window>> {
    if step == 0 {
        return Err(Error::invalid("window length must be positive"));
    }
    if values.len() <= step {
        return Err(Error::TooShort {
            needed: step + 1,
            got: values.len(),
        });
    }
    Ok((0..values.len() - step)
        .map(|i| Window {
            input: values[i..i + step].to_vec(),
            target: values[i + step],
        })
        .collect())
}

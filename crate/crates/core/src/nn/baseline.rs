//! Reference forecasters: persistence and ordinary least squares on the window.

use nalgebra::{DMatrix, DVector};

use crate::data::Window;
use crate::{Error, Result};

const RIDGE: f64 = 1e-8;

/// `target ~ intercept + weights . window`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// The normal equations were singular and a tiny ridge term was added.
    pub ridge_used: bool,
}

impl LinearModel {
    /// Fits on centered data so the intercept never enters the normal equations.
    pub fn fit(windows: &[Window]) -> Result<Self> {
        let first = windows
            .first()
            .ok_or(Error::TooShort { needed: 1, got: 0 })?;
        let k = first.input.len();
        if windows.iter().any(|w| w.input.len() != k) {
            return Err(Error::Shape("windows of different lengths".into()));
        }
        let n = windows.len() as f64;
        let mut x_mean = vec![0.0; k];
        let mut y_mean = 0.0;
        for w in windows {
            for (m, v) in x_mean.iter_mut().zip(&w.input) {
                *m += v / n;
            }
            y_mean += w.target / n;
        }
        let x = DMatrix::from_fn(windows.len(), k, |r, c| windows[r].input[c] - x_mean[c]);
        let y = DVector::from_fn(windows.len(), |r, _| windows[r].target - y_mean);
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * &y;

        let scale = xtx.diagonal().max().max(1.0);
        let solve = |m: DMatrix<f64>| -> Option<DVector<f64>> {
            let chol = m.cholesky()?;
            let d = chol.l().diagonal().map(|v| v * v);
            (d.min() > 1e-12 * scale).then(|| chol.solve(&xty))
        };
        let (beta, ridge_used) = match solve(xtx.clone()) {
            Some(b) => (b, false),
            None => {
                let ridged = &xtx + DMatrix::identity(k, k) * (RIDGE * scale);
                let b = solve(ridged.clone())
                    .or_else(|| ridged.cholesky().map(|c| c.solve(&xty)))
                    .ok_or_else(|| Error::Singular("ridge fallback failed".into()))?;
                (b, true)
            }
        };
        let weights: Vec<f64> = beta.iter().copied().collect();
        let intercept = y_mean - weights.iter().zip(&x_mean).map(|(w, m)| w * m).sum::<f64>();
        Ok(Self {
            weights,
            intercept,
            ridge_used,
        })
    }

    pub fn predict(&self, window: &[f64]) -> f64 {
        self.intercept
            + self
                .weights
                .iter()
                .zip(window)
                .map(|(w, x)| w * x)
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineScores {
    pub persistence_mse: f64,
    pub linear_mse: f64,
    pub linear: LinearModel,
}

/// Persistence (repeat the last window value) and least squares, fit on
/// `train` and scored on `test`.
pub fn baseline_forecasters(train: &[Window], test: &[Window]) -> Result<BaselineScores> {
    if test.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let linear = LinearModel::fit(train)?;
    let n = test.len() as f64;
    let mut persistence_mse = 0.0;
    let mut linear_mse = 0.0;
    for w in test {
        let last = *w
            .input
            .last()
            .ok_or(Error::TooShort { needed: 1, got: 0 })?;
        persistence_mse += (last - w.target).powi(2) / n;
        linear_mse += (linear.predict(&w.input) - w.target).powi(2) / n;
    }
    Ok(BaselineScores {
        persistence_mse,
        linear_mse,
        linear,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_windows;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_series_is_perfect_for_both() {
        let w = make_windows(&[3.5; 40], 10).unwrap();
        let s = baseline_forecasters(&w[..20], &w[20..]).unwrap();
        assert_eq!(s.persistence_mse, 0.0);
        assert!(s.linear_mse < 1e-24);
        assert!(s.linear.ridge_used);
    }

    #[test]
    fn linear_trend_favours_least_squares() {
        let v: Vec<f64> = (0..60).map(|i| 2.0 + 0.5 * i as f64).collect();
        let w = make_windows(&v, 10).unwrap();
        let s = baseline_forecasters(&w[..30], &w[30..]).unwrap();
        assert!(s.linear_mse < 1e-12, "{}", s.linear_mse);
        assert!((s.persistence_mse - 0.25).abs() < 1e-12);
    }

    #[test]
    fn recovers_known_ar_coefficients() {
        let mut rng = crate::seeding::rng(17);
        let mut v = vec![0.0, 0.0];
        for _ in 0..3000 {
            let e: f64 = StandardNormal.sample(&mut rng);
            let n = v.len();
            v.push(0.6 * v[n - 1] - 0.2 * v[n - 2] + 0.1 * e);
        }
        let w = make_windows(&v, 2).unwrap();
        let m = LinearModel::fit(&w).unwrap();
        assert!(!m.ridge_used);
        assert!((m.weights[1] - 0.6).abs() < 0.05);
        assert!((m.weights[0] + 0.2).abs() < 0.05);
    }

    #[test]
    fn random_walk_persistence_is_near_optimal() {
        let mut rng = crate::seeding::rng(23);
        let mut v = vec![0.0];
        for _ in 0..4000 {
            let e: f64 = StandardNormal.sample(&mut rng);
            v.push(v.last().unwrap() + e);
        }
        let w = make_windows(&v, 10).unwrap();
        let (train, test) = w.split_at(2800);
        let s = baseline_forecasters(train, test).unwrap();
        // unit innovations: both should sit near 1, linear no better than noise allows
        assert!((s.persistence_mse - 1.0).abs() < 0.15, "{s:?}");
        assert!(s.linear_mse > 0.95 * s.persistence_mse, "{s:?}");
    }
}

//! Augmented Dickey-Fuller test, constant-only regression.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Critical values of the constant-only ADF t statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalValues {
    pub one_pct: f64,
    pub five_pct: f64,
    pub ten_pct: f64,
}

// MacKinnon (2010) response-surface coefficients, one integrated regressor,
// constant term: cv(T) = b0 + b1/T + b2/T^2 + b3/T^3.
const CV_1: [f64; 4] = [-3.43035, -6.5393, -16.786, -79.433];
const CV_5: [f64; 4] = [-2.86154, -2.8903, -4.234, -40.040];
const CV_10: [f64; 4] = [-2.56677, -1.5384, -2.809, 0.0];

impl CriticalValues {
    pub fn for_sample_size(nobs: usize) -> Self {
        let t = nobs as f64;
        let eval = |c: &[f64; 4]| c[0] + c[1] / t + c[2] / (t * t) + c[3] / (t * t * t);
        Self {
            one_pct: eval(&CV_1),
            five_pct: eval(&CV_5),
            ten_pct: eval(&CV_10),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdfResult {
    pub t_statistic: f64,
    pub critical_value_5pct: f64,
    pub critical_values: CriticalValues,
    /// True when the unit-root null is rejected at 5%, i.e. the series looks stationary.
    pub reject_unit_root: bool,
    pub rho: f64,
    pub nobs: usize,
    pub lag_order: usize,
}

/// Fits `dy_t = a + rho * y_{t-1} + sum_i phi_i * dy_{t-i} + e` by OLS and
/// reports the t statistic of `rho`.
pub fn adf_test(values: &[f64], lag_order: usize) -> Result<AdfResult> {
    let needed = 25 + lag_order;
    if values.len() < needed {
        return Err(Error::TooShort {
            needed,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("adf input".into()));
    }

    let n = values.len();
    let dy: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    // dy[t - 1] is the change ending at t
    let first = lag_order + 1;
    let nobs = n - first;
    let k = 2 + lag_order;

    let x = DMatrix::from_fn(nobs, k, |r, c| {
        let t = first + r;
        match c {
            0 => 1.0,
            1 => values[t - 1],
            _ => dy[t - 1 - (c - 1)],
        }
    });
    let y = DVector::from_fn(nobs, |r, _| dy[first + r - 1]);

    let xtx = x.transpose() * &x;
    let chol = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("ADF design matrix is not positive definite".into()))?;
    let diag = chol.l().diagonal().map(|d| d * d);
    let (dmin, dmax) = (diag.min(), diag.max());
    if !(dmin > dmax * 1e-13) {
        return Err(Error::Singular(
            "ADF design matrix is numerically rank deficient".into(),
        ));
    }

    let beta = chol.solve(&(x.transpose() * &y));
    let resid = &y - &x * &beta;
    let dof = nobs - k;
    let sigma2 = resid.dot(&resid) / dof as f64;
    let inv = chol.inverse();
    let se = (sigma2 * inv[(1, 1)]).sqrt();
    let rho = beta[1];
    let t_statistic = if se > 0.0 {
        rho / se
    } else if rho < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    };

    let critical_values = CriticalValues::for_sample_size(nobs);
    Ok(AdfResult {
        t_statistic,
        critical_value_5pct: critical_values.five_pct,
        critical_values,
        reject_unit_root: t_statistic < critical_values.five_pct,
        rho,
        nobs,
        lag_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn asymptotic_critical_values() {
        let cv = CriticalValues::for_sample_size(1_000_000_000);
        assert!((cv.five_pct + 2.86154).abs() < 1e-6);
        assert!(cv.one_pct < cv.five_pct && cv.five_pct < cv.ten_pct);
    }

    #[test]
    fn decision_matches_statistic() {
        for seed in 0..10 {
            let r = adf_test(&noise(seed, 200), 1).unwrap();
            assert_eq!(r.reject_unit_root, r.t_statistic < r.critical_value_5pct);
            assert_eq!(r.nobs, 198);
        }
    }

    #[test]
    fn white_noise_is_stationary_and_walk_is_not() {
        let e = noise(3, 1000);
        assert!(adf_test(&e, 0).unwrap().reject_unit_root);
        let walk: Vec<f64> = e
            .iter()
            .scan(0.0, |s, x| {
                *s += x;
                Some(*s)
            })
            .collect();
        let r = adf_test(&walk, 0).unwrap();
        assert!(!r.reject_unit_root, "{r:?}");
    }

    #[test]
    fn ols_matches_hand_regression_without_lags() {
        // independent route: closed-form simple regression of dy on y_{t-1}
        let y = noise(11, 120);
        let r = adf_test(&y, 0).unwrap();
        let xs: Vec<f64> = y[..y.len() - 1].to_vec();
        let ys: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = sxy / sxx;
        let icpt = my - slope * mx;
        let rss: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - icpt - slope * x).powi(2))
            .sum();
        let se = (rss / (n - 2.0) / sxx).sqrt();
        assert!((r.rho - slope).abs() < 1e-10);
        assert!((r.t_statistic - slope / se).abs() < 1e-8);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            adf_test(&[1.0; 10], 0),
            Err(Error::TooShort { .. })
        ));
        assert!(matches!(adf_test(&[2.0; 40], 0), Err(Error::Singular(_))));
    }
}

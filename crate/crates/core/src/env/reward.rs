/// Summed gains and summed losses of `returns` around threshold `r`; their
/// quotient is the discrete Omega ratio.
pub fn omega_ratio(returns: &[f64], r: f64) -> (f64, f64) {
    let mut gain = 0.0;
    let mut loss = 0.0;
    for &x in returns {
        if x > r {
            gain += x - r;
        } else {
            loss += r - x;
        }
    }
    (gain, loss)
}

/// Omega ratio of the trailing `window` per-step returns of a net-worth
/// history, clipped to `[0, cap]`.
///
/// No losses with some gains gives `cap`; a window with neither (a flat
/// history) gives the neutral value 1. Fewer than two points gives 0.
pub fn omega_reward(history: &[f64], window: usize, threshold: f64, cap: f64) -> f64 {
    if history.len() < 2 {
        return 0.0;
    }
    let start = history.len().saturating_sub(window + 1);
    let returns: Vec<f64> = history[start..]
        .windows(2)
        .map(|w| w[1] / w[0] - 1.0)
        .collect();
    let (gain, loss) = omega_ratio(&returns, threshold);
    let omega = if loss > 0.0 {
        gain / loss
    } else if gain > 0.0 {
        cap
    } else {
        1.0
    };
    if omega.is_finite() {
        omega.clamp(0.0, cap)
    } else {
        cap
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn history(returns: &[f64]) -> Vec<f64> {
        let mut h = vec![100.0];
        for r in returns {
            let last = *h.last().unwrap();
            h.push(last * (1.0 + r));
        }
        h
    }

    #[test]
    fn symmetric_returns_give_one() {
        assert_eq!(omega_ratio(&[0.01, -0.01], 0.0), (0.01, 0.01));
        let (g, l) = omega_ratio(&[0.02, -0.01, 0.03, -0.04], 0.0);
        assert!((g / l - 1.0).abs() < 1e-15);
    }

    #[test]
    fn all_gains_hit_the_cap() {
        assert_eq!(omega_reward(&[1.0, 2.0, 3.0], 60, 0.0, 10.0), 10.0);
    }

    #[test]
    fn flat_history_is_neutral() {
        assert_eq!(omega_reward(&[5.0; 10], 60, 0.0, 10.0), 1.0);
    }

    #[test]
    fn short_history_is_zero() {
        assert_eq!(omega_reward(&[5.0], 60, 0.0, 10.0), 0.0);
        assert_eq!(omega_reward(&[], 60, 0.0, 10.0), 0.0);
    }

    #[test]
    fn only_trailing_window_counts() {
        // early crash is outside the window of 2
        let h = history(&[-0.5, 0.1, 0.2]);
        assert_eq!(omega_reward(&h, 2, 0.0, 10.0), 10.0);
        assert!(omega_reward(&h, 3, 0.0, 10.0) < 1.0);
    }

    #[test]
    fn all_losses_give_zero() {
        assert_eq!(omega_reward(&[3.0, 2.0, 1.0], 60, 0.0, 10.0), 0.0);
    }
}

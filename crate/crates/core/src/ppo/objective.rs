//! Scalar pieces of the PPO objective.

use crate::{Error, Result};

/// Floor applied to new-policy probabilities inside the KL.
pub const KL_FLOOR: f64 = 1e-12;

/// `r = exp(logp_new - logp_old)`.
pub fn probability_ratio(logp_new: f64, logp_old: f64) -> Result<f64> {
    if !logp_new.is_finite() || !logp_old.is_finite() {
        return Err(Error::NonFinite(format!(
            "log-probabilities {logp_new}, {logp_old}"
        )));
    }
    Ok((logp_new - logp_old).exp())
}

/// `max(min(x, hi), lo)`
pub fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    x.min(hi).max(lo)
}

/// `min(r A, clip(r, 1 - eps, 1 + eps) A)`
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let unclipped = ratio * advantage;
    let clipped = clip(ratio, 1.0 - epsilon, 1.0 + epsilon) * advantage;
    unclipped.min(clipped)
}

/// Derivative of [`clipped_surrogate`] with respect to `logp_new`: `r A`
/// where the unclipped branch is selected, zero where the clip binds.
pub fn clipped_surrogate_grad(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let unclipped = ratio * advantage;
    let clipped = clip(ratio, 1.0 - epsilon, 1.0 + epsilon) * advantage;
    if unclipped <= clipped {
        unclipped
    } else {
        0.0
    }
}

/// Vanilla policy-gradient term `logp * A`.
pub fn pg_surrogate(logp: f64, advantage: f64) -> f64 {
    logp * advantage
}

/// Mean `KL(old || new)` over a batch of full distributions. The second value
/// reports whether any new probability had to be floored.
pub fn approx_kl(old: &[Vec<f64>], new: &[Vec<f64>]) -> Result<(f64, bool)> {
    if old.len() != new.len() || old.is_empty() {
        return Err(Error::Shape(format!(
            "KL over {} old and {} new distributions",
            old.len(),
            new.len()
        )));
    }
    let mut total = 0.0;
    let mut floored = false;
    for (p, q) in old.iter().zip(new) {
        if p.len() != q.len() {
            return Err(Error::Shape("distributions differ in length".into()));
        }
        for (&pi, &qi) in p.iter().zip(q) {
            if pi > 0.0 {
                if qi < KL_FLOOR {
                    floored = true;
                }
                total += pi * (pi.ln() - qi.max(KL_FLOOR).ln());
            }
        }
    }
    Ok(((total / old.len() as f64).max(0.0), floored))
}

/// Backward recursion
/// `delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t`,
/// `A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}`;
/// returns `(advantages, A_t + V_t)`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::Shape(format!(
            "GAE over {n} rewards, {} values, {} dones",
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Zero mean, unit variance (population); constant input maps to zeros.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = (*a - mean) / (std + 1e-8);
    }
}

use super::objective::{approx_kl, clipped_surrogate, clipped_surrogate_grad, probability_ratio};
use super::policy::{entropy, PolicyNet};
use super::rollout::RolloutBuffer;
use super::trainer::PpoConfig;
use crate::nn::LstmState;
use crate::{Error, Result};

/// A contiguous slice of a rollout, replayed from its stored initial state.
#[derive(Debug, Clone)]
pub struct SequenceBatch {
    pub observations: Vec<Vec<f64>>,
    pub init_state: Vec<LstmState>,
    pub resets: Vec<bool>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub old_probs: Vec<Vec<f64>>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl SequenceBatch {
    /// Steps `start..end` of `buf`; advantages and returns must be filled in.
    pub fn from_buffer(buf: &RolloutBuffer, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > buf.len() {
            return Err(Error::invalid(format!(
                "batch {start}..{end} of a {}-step rollout",
                buf.len()
            )));
        }
        if buf.advantages.len() != buf.len() || buf.returns.len() != buf.len() {
            return Err(Error::invalid("advantages not computed for this rollout"));
        }
        Ok(Self {
            observations: buf.observations[start..end].to_vec(),
            init_state: buf.states[start].clone(),
            resets: (start..end).map(|t| buf.reset_before(start, t)).collect(),
            actions: buf.actions[start..end].to_vec(),
            old_log_probs: buf.log_probs[start..end].to_vec(),
            old_probs: buf.old_probs[start..end].to_vec(),
            advantages: buf.advantages[start..end].to_vec(),
            returns: buf.returns[start..end].to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossComponents {
    pub total: f64,
    /// `-mean(L^CLIP)`
    pub policy_loss: f64,
    /// `mean((V - R)^2)`, before the `c1` weight.
    pub value_loss: f64,
    /// Mean policy entropy, before the `c2` weight.
    pub entropy: f64,
    pub approx_kl: f64,
    pub kl_floored: bool,
    pub ratios: Vec<f64>,
}

/// `-mean(L^CLIP) + c1 mean((V - R)^2) - c2 mean(S)`. When `grads` is given,
/// the gradient of that loss is added into it.
pub fn combined_loss(
    policy: &PolicyNet,
    batch: &SequenceBatch,
    cfg: &PpoConfig,
    grads: Option<&mut PolicyNet>,
) -> Result<LossComponents> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let n = batch.len() as f64;
    let (outs, _, cache) =
        policy.forward_sequence(&batch.observations, &batch.init_state, &batch.resets)?;

    let mut policy_obj = 0.0;
    let mut value_loss = 0.0;
    let mut ent = 0.0;
    let mut ratios = Vec::with_capacity(outs.len());
    let mut d_logits = Vec::with_capacity(outs.len());
    let mut d_values = Vec::with_capacity(outs.len());
    for (t, out) in outs.iter().enumerate() {
        let a = batch.actions[t];
        let adv = batch.advantages[t];
        let ratio = probability_ratio(out.log_probs[a], batch.old_log_probs[t])?;
        policy_obj += clipped_surrogate(ratio, adv, cfg.clip_epsilon) / n;
        let err = out.value - batch.returns[t];
        value_loss += err * err / n;
        let h = entropy(&out.probs, &out.log_probs);
        ent += h / n;
        ratios.push(ratio);

        if grads.is_some() {
            // d(-obj)/dz = -g (e_a - p);  d(-c2 H)/dz_j = c2 p_j (log p_j + H)
            let g = clipped_surrogate_grad(ratio, adv, cfg.clip_epsilon);
            let dz: Vec<f64> = out
                .probs
                .iter()
                .zip(&out.log_probs)
                .enumerate()
                .map(|(j, (p, lp))| {
                    let onehot = if j == a { 1.0 } else { 0.0 };
                    let pg = -g * (onehot - p);
                    let s = if *p > 0.0 { cfg.c2 * p * (lp + h) } else { 0.0 };
                    (pg + s) / n
                })
                .collect();
            d_logits.push(dz);
            d_values.push(2.0 * cfg.c1 * err / n);
        }
    }
    let new_probs: Vec<Vec<f64>> = outs.iter().map(|o| o.probs.clone()).collect();
    let (kl, kl_floored) = approx_kl(&batch.old_probs, &new_probs)?;
    let policy_loss = -policy_obj;
    let total = policy_loss + cfg.c1 * value_loss - cfg.c2 * ent;
    if !total.is_finite() {
        return Err(Error::NonFinite(format!(
            "loss: policy {policy_loss}, value {value_loss}, entropy {ent}"
        )));
    }
    if let Some(grads) = grads {
        policy.backward_sequence(&d_logits, &d_values, &cache, grads)?;
    }
    Ok(LossComponents {
        total,
        policy_loss,
        value_loss,
        entropy: ent,
        approx_kl: kl,
        kl_floored,
        ratios,
    })
}

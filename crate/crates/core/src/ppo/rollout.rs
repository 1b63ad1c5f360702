use rand::Rng as _;

use super::policy::{policy_forward, sample_categorical, PolicyNet};
use crate::env::Environment;
use crate::nn::LstmState;
use crate::seeding::Rng;
use crate::{Error, Result};

/// Where the next rollout resumes: the pending observation and the recurrent
/// state that goes with it.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutCursor {
    pub observation: Vec<f64>,
    pub state: Vec<LstmState>,
}

impl RolloutCursor {
    /// Resets `env` and starts from the zero state.
    pub fn start<E: Environment + ?Sized>(env: &mut E, policy: &PolicyNet) -> Result<Self> {
        Ok(Self {
            observation: env.reset()?,
            state: policy.initial_state(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBuffer {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    /// Full sampling distributions, kept for the KL diagnostic.
    pub old_probs: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// `dones[t]`: the episode ended with action `t`.
    pub dones: Vec<bool>,
    /// Recurrent state before step `t`.
    pub states: Vec<Vec<LstmState>>,
    pub bootstrap_value: Option<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Whether the recurrent state is zeroed before step `t` of a replay that
    /// starts at `start`.
    pub fn reset_before(&self, start: usize, t: usize) -> bool {
        t > start && self.dones[t - 1]
    }
}

/// Samples `horizon` steps, resetting the environment whenever an episode
/// ends, and records the bootstrap value of the state after the last step.
pub fn collect_rollout<E: Environment + ?Sized>(
    env: &mut E,
    policy: &PolicyNet,
    horizon: usize,
    cursor: &mut RolloutCursor,
    rng: &mut Rng,
) -> Result<RolloutBuffer> {
    if horizon < 2 {
        return Err(Error::invalid("rollout horizon must be at least 2"));
    }
    let mut buf = RolloutBuffer::default();
    for _ in 0..horizon {
        let (out, next_state) = policy_forward(&cursor.observation, &cursor.state, policy)?;
        let action = sample_categorical(&out.probs, rng.random::<f64>());
        let (obs, reward, done) = env.step(action)?;
        if !reward.is_finite() {
            return Err(Error::NonFinite(format!("reward {reward}")));
        }
        buf.observations
            .push(std::mem::take(&mut cursor.observation));
        buf.states
            .push(std::mem::replace(&mut cursor.state, next_state));
        buf.actions.push(action);
        buf.log_probs.push(out.log_probs[action]);
        buf.old_probs.push(out.probs);
        buf.rewards.push(reward);
        buf.values.push(out.value);
        buf.dones.push(done);
        if done {
            cursor.observation = env.reset()?;
            cursor.state = policy.initial_state();
        } else {
            cursor.observation = obs;
        }
    }
    let (boot, _) = policy_forward(&cursor.observation, &cursor.state, policy)?;
    buf.bootstrap_value = Some(boot.value);
    Ok(buf)
}

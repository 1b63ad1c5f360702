use super::policy::{policy_forward, PolicyNet};
use crate::env::Environment;
use crate::{Error, Result};

/// Two alternating states; action 0 pays 1, every other action pays 0.
#[derive(Debug, Clone)]
pub struct BanditEnv {
    pub n_actions: usize,
    pub episode_len: usize,
    t: usize,
}

impl BanditEnv {
    pub fn new(n_actions: usize, episode_len: usize) -> Self {
        Self {
            n_actions,
            episode_len,
            t: 0,
        }
    }

    fn obs(&self) -> Vec<f64> {
        if self.t.is_multiple_of(2) {
            vec![1.0, 0.0]
        } else {
            vec![0.0, 1.0]
        }
    }
}

impl Environment for BanditEnv {
    fn obs_dim(&self) -> usize {
        2
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        self.t = 0;
        Ok(self.obs())
    }

    fn step(&mut self, action: usize) -> Result<(Vec<f64>, f64, bool)> {
        if action >= self.n_actions {
            return Err(Error::ActionOutOfRange(action));
        }
        if self.t >= self.episode_len {
            return Err(Error::EpisodeDone);
        }
        self.t += 1;
        let reward = if action == 0 { 1.0 } else { 0.0 };
        Ok((self.obs(), reward, self.t >= self.episode_len))
    }
}

/// Mean probability the policy puts on `action` over one episode in which it
/// always takes that action.
pub fn action_probability(policy: &PolicyNet, env: &mut BanditEnv, action: usize) -> Result<f64> {
    let mut obs = env.reset()?;
    let mut state = policy.initial_state();
    let mut total = 0.0;
    for _ in 0..env.episode_len {
        let (out, next) = policy_forward(&obs, &state, policy)?;
        total += out.probs[action];
        obs = env.step(action)?.0;
        state = next;
    }
    Ok(total / env.episode_len as f64)
}

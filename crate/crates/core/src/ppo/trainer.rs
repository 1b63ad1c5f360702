use std::fmt::Write as _;

use rand::seq::SliceRandom;

use super::loss::{combined_loss, SequenceBatch};
use super::objective::{compute_gae, normalize_advantages};
use super::policy::{argmax, policy_forward, PolicyNet};
use super::rollout::{collect_rollout, RolloutCursor};
use crate::env::{Environment, EpisodeTrace, TradingEnv};
use crate::nn::{adam_step, AdamState, Parameterized};
use crate::report::profit_rate;
use crate::seeding;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_epsilon: f64,
    pub c1: f64,
    pub c2: f64,
    pub horizon: usize,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub total_iterations: usize,
    pub kl_stop: f64,
    pub hidden: usize,
    pub layers: usize,
    pub normalize_advantages: bool,
    /// Global gradient-norm clip per minibatch; 0 disables it.
    pub max_grad_norm: f64,
    /// Divide rewards by the running std of the discounted return before GAE.
    pub scale_rewards: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip_epsilon: 0.2,
            c1: 0.5,
            c2: 0.01,
            horizon: 512,
            epochs_per_update: 4,
            minibatch_size: 64,
            learning_rate: 3e-4,
            total_iterations: 100,
            kl_stop: 0.03,
            hidden: 50,
            layers: 1,
            normalize_advantages: true,
            max_grad_norm: 0.5,
            scale_rewards: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must be in [0, 1]");
        }
        if !(self.clip_epsilon > 0.0) {
            return bad("clip_epsilon must be positive");
        }
        if !(self.c1 >= 0.0 && self.c2 >= 0.0 && self.max_grad_norm >= 0.0) {
            return bad("loss coefficients must be non-negative");
        }
        if self.horizon < 2 {
            return bad("horizon must be at least 2");
        }
        if self.minibatch_size == 0 || self.epochs_per_update == 0 || self.hidden == 0 {
            return bad("minibatch_size, epochs_per_update and hidden must be positive");
        }
        if !(self.learning_rate > 0.0 && self.kl_stop > 0.0) {
            return bad("learning_rate and kl_stop must be positive");
        }
        Ok(())
    }
}

/// Running std of the discounted return, used to scale rewards.
#[derive(Debug, Clone, Default)]
struct ReturnScaler {
    ret: f64,
    count: f64,
    mean: f64,
    m2: f64,
}

impl ReturnScaler {
    fn scale(&mut self, rewards: &[f64], dones: &[bool], gamma: f64) -> Vec<f64> {
        for (r, d) in rewards.iter().zip(dones) {
            self.ret = self.ret * gamma + r;
            self.count += 1.0;
            let delta = self.ret - self.mean;
            self.mean += delta / self.count;
            self.m2 += delta * (self.ret - self.mean);
            if *d {
                self.ret = 0.0;
            }
        }
        let std = (self.m2 / self.count.max(1.0)).sqrt();
        let k = if std > 1e-8 { 1.0 / std } else { 1.0 };
        rewards.iter().map(|r| r * k).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub lr: f64,
}

pub const TRAINING_LOG_HEADER: &str =
    "iteration,mean_reward,policy_loss,value_loss,entropy,approx_kl,lr";

pub fn training_log_csv(log: &[IterationLog]) -> String {
    let mut s = String::from(TRAINING_LOG_HEADER);
    s.push('\n');
    for r in log {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.iteration, r.mean_reward, r.policy_loss, r.value_loss, r.entropy, r.approx_kl, r.lr
        );
    }
    s
}

pub fn parse_training_log(text: &str) -> Result<Vec<IterationLog>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(Error::Parse(format!("training log line {}: {line}", i + 1)));
        }
        let num = |k: usize| -> Result<f64> {
            f[k].parse()
                .map_err(|e| Error::Parse(format!("training log line {}: {e}", i + 1)))
        };
        out.push(IterationLog {
            iteration: f[0]
                .parse()
                .map_err(|e| Error::Parse(format!("training log line {}: {e}", i + 1)))?,
            mean_reward: num(1)?,
            policy_loss: num(2)?,
            value_loss: num(3)?,
            entropy: num(4)?,
            approx_kl: num(5)?,
            lr: num(6)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct AgentTraining {
    /// Final parameters, or the last good ones if training diverged.
    pub policy: PolicyNet,
    pub log: Vec<IterationLog>,
    pub diverged: Option<String>,
}

/// Rollout, GAE, optional advantage normalization, then
/// `epochs_per_update` shuffled passes of contiguous minibatches. An update
/// phase stops at the first minibatch whose KL from the rollout policy
/// exceeds `kl_stop`.
pub fn train_agent<E: Environment + ?Sized>(
    env: &mut E,
    cfg: &PpoConfig,
    seed: u64,
) -> Result<AgentTraining> {
    let policy = PolicyNet::new(
        env.obs_dim(),
        env.n_actions(),
        cfg.hidden,
        cfg.layers,
        seeding::derive(seed, "policy"),
    );
    train_agent_from(env, cfg, seed, policy)
}

/// [`train_agent`] starting from given parameters.
pub fn train_agent_from<E: Environment + ?Sized>(
    env: &mut E,
    cfg: &PpoConfig,
    seed: u64,
    mut policy: PolicyNet,
) -> Result<AgentTraining> {
    cfg.validate()?;
    if policy.obs_dim() != env.obs_dim() || policy.n_actions() != env.n_actions() {
        return Err(Error::Shape(format!(
            "policy ({} -> {}) does not fit environment ({} -> {})",
            policy.obs_dim(),
            policy.n_actions(),
            env.obs_dim(),
            env.n_actions()
        )));
    }
    let mut adam = AdamState::new(&policy);
    let mut rollout_rng = seeding::named_rng(seed, "ppo-rollout");
    let mut batch_rng = seeding::named_rng(seed, "ppo-minibatch");
    let mut cursor = RolloutCursor::start(env, &policy)?;
    let mut log = Vec::with_capacity(cfg.total_iterations);
    let mut grads = policy.zeros_like();
    let mut scaler = ReturnScaler::default();

    let chunks: Vec<(usize, usize)> = (0..cfg.horizon)
        .step_by(cfg.minibatch_size)
        .map(|s| (s, (s + cfg.minibatch_size).min(cfg.horizon)))
        .collect();

    for iteration in 0..cfg.total_iterations {
        let last_good = policy.clone();
        let diverge = |detail: String, log: Vec<IterationLog>| AgentTraining {
            policy: last_good.clone(),
            log,
            diverged: Some(format!("iteration {iteration}: {detail}")),
        };

        let mut buf = collect_rollout(env, &policy, cfg.horizon, &mut cursor, &mut rollout_rng)?;
        let scaled;
        let rewards = if cfg.scale_rewards {
            scaled = scaler.scale(&buf.rewards, &buf.dones, cfg.gamma);
            &scaled
        } else {
            &buf.rewards
        };
        let (mut adv, ret) = compute_gae(
            rewards,
            &buf.values,
            &buf.dones,
            buf.bootstrap_value
                .ok_or_else(|| Error::invalid("missing bootstrap value"))?,
            cfg.gamma,
            cfg.lambda,
        )?;
        if cfg.normalize_advantages {
            normalize_advantages(&mut adv);
        }
        buf.advantages = adv;
        buf.returns = ret;
        let batches: Vec<SequenceBatch> = chunks
            .iter()
            .map(|&(s, e)| SequenceBatch::from_buffer(&buf, s, e))
            .collect::<Result<_>>()?;

        let mut order: Vec<usize> = (0..batches.len()).collect();
        let mut stats = (0.0, 0.0, 0.0, 0.0, 0usize);
        'epochs: for _ in 0..cfg.epochs_per_update {
            order.shuffle(&mut batch_rng);
            stats = (0.0, 0.0, 0.0, 0.0, 0);
            for &b in &order {
                grads.zero();
                let comp = match combined_loss(&policy, &batches[b], cfg, Some(&mut grads)) {
                    Ok(c) => c,
                    Err(Error::NonFinite(d)) => return Ok(diverge(d, log)),
                    Err(e) => return Err(e),
                };
                stats.0 += comp.policy_loss;
                stats.1 += comp.value_loss;
                stats.2 += comp.entropy;
                stats.3 += comp.approx_kl;
                stats.4 += 1;
                if comp.approx_kl > cfg.kl_stop {
                    break 'epochs;
                }
                if cfg.max_grad_norm > 0.0 {
                    let norm = grads.global_norm();
                    if norm > cfg.max_grad_norm {
                        grads.scale(cfg.max_grad_norm / norm);
                    }
                }
                if let Err(e) = adam_step(&mut policy, &grads, &mut adam, cfg.learning_rate) {
                    return Ok(diverge(e.to_string(), log));
                }
                if !policy.is_finite() {
                    return Ok(diverge("non-finite parameters".into(), log));
                }
            }
        }
        let k = stats.4.max(1) as f64;
        log.push(IterationLog {
            iteration,
            mean_reward: buf.rewards.iter().sum::<f64>() / buf.len() as f64,
            policy_loss: stats.0 / k,
            value_loss: stats.1 / k,
            entropy: stats.2 / k,
            approx_kl: stats.3 / k,
            lr: cfg.learning_rate,
        });
    }
    Ok(AgentTraining {
        policy,
        log,
        diverged: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub trace: EpisodeTrace,
    pub profit_rate: f64,
    pub actions: Vec<usize>,
}

/// One greedy episode from a fresh reset with slippage seed `seed`.
pub fn evaluate_agent(policy: &PolicyNet, env: &mut TradingEnv, seed: u64) -> Result<Evaluation> {
    let mut obs = env.reset_seeded(seed).to_vec();
    let mut state = policy.initial_state();
    let mut actions = Vec::with_capacity(env.episode_len());
    while !env.is_done() {
        let (out, next) = policy_forward(&obs, &state, policy)?;
        let a = argmax(&out.probs);
        actions.push(a);
        obs = env.step_index(a)?.observation.to_vec();
        state = next;
    }
    let trace = env.trace();
    let profit_rate = profit_rate(&trace)?;
    Ok(Evaluation {
        trace,
        profit_rate,
        actions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaler_divides_by_return_std() {
        // with gamma = 0 the running return is the reward itself
        let rewards = [1.0, 3.0, 2.0, 6.0];
        let mean = 3.0;
        let std = (rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / 4.0).sqrt();
        let out = ReturnScaler::default().scale(&rewards, &[false; 4], 0.0);
        for (o, r) in out.iter().zip(&rewards) {
            assert!((o - r / std).abs() < 1e-12);
        }
    }

    #[test]
    fn scaler_leaves_constant_returns_alone() {
        let mut s = ReturnScaler::default();
        assert_eq!(s.scale(&[2.0; 3], &[true; 3], 0.9), vec![2.0; 3]);
    }
}

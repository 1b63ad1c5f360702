use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::parse_key_values;
use crate::nn::{
    checkpoint, log_softmax, Activation, DenseCache, DenseParams, LstmStack, LstmState, Matrix,
    Parameterized, StackCache,
};
use crate::seeding;
use crate::{Error, Result};

/// Recurrent actor-critic: an LSTM backbone whose last hidden vector feeds a
/// softmax policy head and a linear value head.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub backbone: LstmStack,
    pub policy_head: DenseParams,
    pub value_head: DenseParams,
}

/// Per-step head caches of a sequence forward pass.
#[derive(Debug, Clone)]
pub struct SequenceCache {
    pub stack: StackCache,
    pub policy: Vec<DenseCache>,
    pub value: Vec<DenseCache>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub value: f64,
}

impl PolicyNet {
    /// Uniform init for the backbone and value head; the policy head starts
    /// 100x smaller so the initial policy is close to uniform.
    pub fn new(obs_dim: usize, n_actions: usize, hidden: usize, layers: usize, seed: u64) -> Self {
        let mut rng = seeding::named_rng(seed, "policy-init");
        let backbone = LstmStack::init(obs_dim, hidden, layers.max(1), &mut rng);
        let mut policy_head = DenseParams::init(hidden, n_actions, Activation::Softmax, &mut rng);
        policy_head.scale(0.01);
        let value_head = DenseParams::init(hidden, 1, Activation::Linear, &mut rng);
        Self {
            backbone,
            policy_head,
            value_head,
        }
    }

    pub fn zeros(obs_dim: usize, n_actions: usize, hidden: usize, layers: usize) -> Self {
        Self {
            backbone: LstmStack::zeros(obs_dim, hidden, layers.max(1)),
            policy_head: DenseParams::zeros(hidden, n_actions, Activation::Softmax),
            value_head: DenseParams::zeros(hidden, 1, Activation::Linear),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            backbone: self.backbone.zeros_like(),
            policy_head: self.policy_head.zeros_like(),
            value_head: self.value_head.zeros_like(),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.backbone.input_dim()
    }

    pub fn n_actions(&self) -> usize {
        self.policy_head.output_dim()
    }

    pub fn hidden(&self) -> usize {
        self.backbone.hidden_dim()
    }

    pub fn layers(&self) -> usize {
        self.backbone.layers.len()
    }

    pub fn initial_state(&self) -> Vec<LstmState> {
        self.backbone.zero_state()
    }

    fn heads(&self, top: &[f64]) -> Result<(PolicyOutput, DenseCache, DenseCache)> {
        let (probs, pc) = self.policy_head.forward(top)?;
        let log_probs = log_softmax(&pc.z);
        let (v, vc) = self.value_head.forward(top)?;
        Ok((
            PolicyOutput {
                probs,
                log_probs,
                value: v[0],
            },
            pc,
            vc,
        ))
    }

    /// Runs `observations` from `init`, zeroing the state before step `t`
    /// whenever `resets[t]` is set.
    pub fn forward_sequence(
        &self,
        observations: &[Vec<f64>],
        init: &[LstmState],
        resets: &[bool],
    ) -> Result<(Vec<PolicyOutput>, Vec<LstmState>, SequenceCache)> {
        if let Some(o) = observations.iter().find(|o| o.len() != self.obs_dim()) {
            return Err(Error::Shape(format!(
                "policy expects observations of {}, got {}",
                self.obs_dim(),
                o.len()
            )));
        }
        let (tops, finals, stack) =
            self.backbone
                .forward_sequence(observations, init, resets, None)?;
        let mut outs = Vec::with_capacity(tops.len());
        let mut policy = Vec::with_capacity(tops.len());
        let mut value = Vec::with_capacity(tops.len());
        for top in &tops {
            let (o, pc, vc) = self.heads(top)?;
            outs.push(o);
            policy.push(pc);
            value.push(vc);
        }
        Ok((
            outs,
            finals,
            SequenceCache {
                stack,
                policy,
                value,
            },
        ))
    }

    /// Gradients `dL/dz` on the policy logits and `dL/dV` per step are pushed
    /// back through the heads and the backbone into `grads`.
    pub fn backward_sequence(
        &self,
        d_logits: &[Vec<f64>],
        d_values: &[f64],
        cache: &SequenceCache,
        grads: &mut PolicyNet,
    ) -> Result<()> {
        let mut d_top = Vec::with_capacity(d_logits.len());
        for t in 0..d_logits.len() {
            let mut d = self.policy_head.backward_preactivation(
                &d_logits[t],
                &cache.policy[t],
                &mut grads.policy_head,
            );
            let dv = self.value_head.backward_preactivation(
                &[d_values[t]],
                &cache.value[t],
                &mut grads.value_head,
            );
            d.iter_mut().zip(&dv).for_each(|(a, b)| *a += b);
            d_top.push(d);
        }
        self.backbone
            .backward_sequence(&d_top, &cache.stack, &mut grads.backbone)?;
        Ok(())
    }

    pub fn save(&self, dir: &Path, name: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        checkpoint::save(self, &dir.join(format!("{name}.nnc")))?;
        let mut s = String::new();
        let _ = writeln!(s, "kind = lstm_actor_critic");
        let _ = writeln!(s, "obs_dim = {}", self.obs_dim());
        let _ = writeln!(s, "n_actions = {}", self.n_actions());
        let _ = writeln!(s, "hidden = {}", self.hidden());
        let _ = writeln!(s, "layers = {}", self.layers());
        let path = dir.join(format!("{name}.txt"));
        fs::write(&path, s).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path, name: &str) -> Result<Self> {
        let path = dir.join(format!("{name}.txt"));
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let kv = parse_key_values(&text)?;
        let get = |k: &str| -> Result<usize> {
            kv.get(k)
                .ok_or_else(|| Error::Checkpoint(format!("{} missing {k}", path.display())))?
                .parse()
                .map_err(|e| Error::Checkpoint(format!("{k}: {e}")))
        };
        let mut net = Self::zeros(
            get("obs_dim")?,
            get("n_actions")?,
            get("hidden")?,
            get("layers")?,
        );
        checkpoint::load_into(&mut net, &dir.join(format!("{name}.nnc")))?;
        Ok(net)
    }
}

impl Parameterized for PolicyNet {
    fn tensors(&self) -> Vec<&Matrix> {
        let mut v = self.backbone.tensors();
        v.extend(self.policy_head.tensors());
        v.extend(self.value_head.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = self.backbone.tensors_mut();
        v.extend(self.policy_head.tensors_mut());
        v.extend(self.value_head.tensors_mut());
        v
    }
}

/// One-step forward: action distribution, value estimate and next state.
pub fn policy_forward(
    observation: &[f64],
    state: &[LstmState],
    params: &PolicyNet,
) -> Result<(PolicyOutput, Vec<LstmState>)> {
    let (mut outs, next, _) = params.forward_sequence(&[observation.to_vec()], state, &[])?;
    Ok((outs.pop().expect("one step"), next))
}

/// Shannon entropy in nats.
pub fn entropy(probs: &[f64], log_probs: &[f64]) -> f64 {
    -probs
        .iter()
        .zip(log_probs)
        .map(|(p, lp)| if *p > 0.0 { p * lp } else { 0.0 })
        .sum::<f64>()
}

/// Index of the largest probability; the first one wins ties.
pub fn argmax(probs: &[f64]) -> usize {
    probs
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

/// Inverse-CDF draw from a discrete distribution.
pub fn sample_categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left the total below u: take the last action with mass
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

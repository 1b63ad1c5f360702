//! Proximal policy optimization with a recurrent actor-critic.

mod bandit;
mod loss;
mod objective;
mod policy;
mod rollout;
mod trainer;

pub use bandit::{action_probability, BanditEnv};
pub use loss::{combined_loss, LossComponents, SequenceBatch};
pub use objective::{
    approx_kl, clip, clipped_surrogate, clipped_surrogate_grad, compute_gae, normalize_advantages,
    pg_surrogate, probability_ratio, KL_FLOOR,
};
pub use policy::{
    argmax, entropy, policy_forward, sample_categorical, PolicyNet, PolicyOutput, SequenceCache,
};
pub use rollout::{collect_rollout, RolloutBuffer, RolloutCursor};
pub use trainer::{
    evaluate_agent, parse_training_log, train_agent, train_agent_from, training_log_csv,
    AgentTraining, Evaluation, IterationLog, PpoConfig, TRAINING_LOG_HEADER,
};

//! Single-asset market simulator with fees, slippage and a lot grid.

mod action;
mod market;
mod reward;
mod trace;

pub use action::{ActionKind, DiscreteAction, Order};
pub use market::{
    mark_to_market, EnvConfig, Environment, Observation, Portfolio, StepInfo, StepResult,
    TradingEnv,
};
pub use reward::{omega_ratio, omega_reward};
pub use trace::{read_trace, write_trace, EpisodeTrace, TraceRow};

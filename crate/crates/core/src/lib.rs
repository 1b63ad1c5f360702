//! Research toolkit for a PPO bitcoin trading agent.
//!
//! The pipeline runs in five stages, each in its own module:
//!
//! * [`data`]: OHLCV ingestion, differencing, min-max scaling, ADF stationarity
//!   check, chronological splits and supervised windows.
//! * [`nn`]: dense and peephole-LSTM layers with exact reverse-mode gradients,
//!   Adam, dropout, forecaster training with plateau early stopping, grid search
//!   and the persistence / least-squares baselines.
//! * [`env`]: a seeded, fee and slippage aware single-asset market simulator
//!   with a 24-way discrete action space and an Omega-ratio reward.
//! * [`ppo`]: recurrent actor-critic, rollout collection, GAE and the clipped
//!   surrogate trainer.
//! * [`strategies`] and [`report`]: rule-based benchmarks and backtest output.

pub mod config;
pub mod data;
pub mod env;
pub mod error;
pub mod nn;
pub mod ppo;
pub mod report;
pub mod seeding;
pub mod strategies;

pub use error::{Error, Result};

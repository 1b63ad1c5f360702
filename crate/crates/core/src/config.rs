//! Plain-text `key = value` configuration.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::data::PreprocessOptions;
use crate::env::EnvConfig;
use crate::nn::{ForecasterConfig, TrainSchedule};
use crate::ppo::PpoConfig;
use crate::strategies::StrategyParams;
use crate::{Error, Result};

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
/// Later keys override earlier ones.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Parse(format!(
                "line {}: expected `key = value`, got {raw:?}",
                lineno + 1
            ))
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Parse(format!("line {}: empty key", lineno + 1)));
        }
        map.insert(k.to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Every tunable of a run. Resolution order: built-in defaults, then the
/// config file, then command-line overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Raw OHLCV CSV read by `ingest`.
    pub data_path: String,
    pub out_dir: String,
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
    pub preprocess: PreprocessOptions,
    pub forecaster: ForecasterConfig,
    pub schedule: TrainSchedule,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub strategy: StrategyParams,
    /// Comma-separated strategy slugs plus `agent`, or `all`.
    pub backtest_strategies: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_path: "data/candles.csv".into(),
            out_dir: "out".into(),
            seed: 42,
            jobs: 0,
            preprocess: PreprocessOptions::default(),
            forecaster: ForecasterConfig::default(),
            schedule: TrainSchedule::default(),
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
            strategy: StrategyParams::default(),
            backtest_strategies: "all".into(),
        }
    }
}

fn parse_value<T>(key: &str, value: &str) -> Result<T>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Parse(format!("{key} = {value:?}: {e}")))
}

macro_rules! run_config_fields {
    ($($key:literal => $($field:ident).+ : $ty:ty,)*) => {
        impl RunConfig {
            /// All recognised keys, in echo order.
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $($key => self.$($field).+ = parse_value::<$ty>(key, value)?,)*
                    _ => return Err(Error::Parse(format!("unknown config key {key:?}"))),
                }
                Ok(())
            }

            pub fn get(&self, key: &str) -> Option<String> {
                match key {
                    $($key => Some(self.$($field).+.to_string()),)*
                    _ => None,
                }
            }
        }
    };
}

run_config_fields! {
    "data_path" => data_path: String,
    "out_dir" => out_dir: String,
    "seed" => seed: u64,
    "jobs" => jobs: usize,
    "split.train" => preprocess.split.train_fraction: f64,
    "split.valid" => preprocess.split.valid_fraction: f64,
    "split.test" => preprocess.split.test_fraction: f64,
    "preprocess.y_min" => preprocess.y_min: f64,
    "preprocess.y_max" => preprocess.y_max: f64,
    "preprocess.adf_lag" => preprocess.adf_lag: usize,
    "forecaster.layers" => forecaster.layers: usize,
    "forecaster.hidden" => forecaster.hidden: usize,
    "forecaster.dropout" => forecaster.dropout: f64,
    "forecaster.window" => forecaster.window: usize,
    "forecaster.lr" => schedule.initial_lr: f64,
    "forecaster.max_epochs" => schedule.max_epochs: usize,
    "forecaster.lr_patience" => schedule.lr_patience: usize,
    "forecaster.lr_factor" => schedule.lr_factor: f64,
    "forecaster.stop_patience" => schedule.stop_patience: usize,
    "forecaster.batch_size" => schedule.batch_size: usize,
    "env.initial_cash" => env.initial_cash: f64,
    "env.fee_rate" => env.fee_rate: f64,
    "env.max_slippage" => env.max_slippage: f64,
    "env.min_unit" => env.min_unit: f64,
    "env.amount_levels" => env.amount_levels: usize,
    "env.observation_window" => env.observation_window: usize,
    "env.omega_window" => env.omega_window: usize,
    "env.omega_threshold" => env.omega_threshold: f64,
    "env.reward_cap" => env.reward_cap: f64,
    "ppo.gamma" => ppo.gamma: f64,
    "ppo.lambda" => ppo.lambda: f64,
    "ppo.clip_epsilon" => ppo.clip_epsilon: f64,
    "ppo.c1" => ppo.c1: f64,
    "ppo.c2" => ppo.c2: f64,
    "ppo.horizon" => ppo.horizon: usize,
    "ppo.epochs_per_update" => ppo.epochs_per_update: usize,
    "ppo.minibatch_size" => ppo.minibatch_size: usize,
    "ppo.learning_rate" => ppo.learning_rate: f64,
    "ppo.total_iterations" => ppo.total_iterations: usize,
    "ppo.kl_stop" => ppo.kl_stop: f64,
    "ppo.hidden" => ppo.hidden: usize,
    "ppo.layers" => ppo.layers: usize,
    "ppo.normalize_advantages" => ppo.normalize_advantages: bool,
    "ppo.max_grad_norm" => ppo.max_grad_norm: f64,
    "ppo.scale_rewards" => ppo.scale_rewards: bool,
    "strategy.r0" => strategy.r0: f64,
    "strategy.u_cross" => strategy.u_cross: f64,
    "strategy.u_flat" => strategy.u_flat: f64,
    "strategy.n" => strategy.n: usize,
    "strategy.short_window" => strategy.short_window: usize,
    "strategy.long_window" => strategy.long_window: usize,
    "backtest.strategies" => backtest_strategies: String,
}

impl RunConfig {
    /// Defaults, then `file` (if any), then `overrides` in order.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_text(&text)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_key_values(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.preprocess.split.validate()?;
        if !(self.preprocess.y_max > self.preprocess.y_min) {
            return Err(Error::invalid(
                "preprocess.y_max must exceed preprocess.y_min",
            ));
        }
        self.forecaster.validate()?;
        self.schedule.validate()?;
        self.env.validate()?;
        self.ppo.validate()?;
        self.strategy.validate()?;
        Ok(())
    }

    /// Every key with its resolved value; parses back to the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# resolved run configuration\n");
        for k in Self::KEYS {
            let _ = writeln!(s, "{k} = {}", self.get(k).unwrap_or_default());
        }
        s
    }
}

/// Splits `key=value` as given on the command line.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("expected key=value, got {s:?}")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_values_with_comments() {
        let kv = parse_key_values("# top\na = 1\n b=two # trailing\n\na = 3\n").unwrap();
        assert_eq!(kv["a"], "3");
        assert_eq!(kv["b"], "two");
        assert!(parse_key_values("novalue\n").is_err());
    }

    #[test]
    fn default_values() {
        let c = RunConfig::default();
        assert_eq!(c.env.initial_cash, 10_000.0);
        assert_eq!(c.env.fee_rate, 0.0025);
        assert_eq!(c.env.max_slippage, 0.02);
        assert_eq!(c.env.min_unit, 0.125);
        assert_eq!(c.env.n_actions(), 24);
        assert_eq!(c.schedule.max_epochs, 300);
        assert_eq!(c.strategy.r0, 5.0);
        assert_eq!(c.strategy.u_cross, 0.05);
        assert_eq!(c.strategy.u_flat, 0.25);
        assert_eq!(c.strategy.n, 50);
        c.validate().unwrap();
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.set("ppo.gamma", "0.97").unwrap();
        c.set("env.fee_rate", "0.001").unwrap();
        c.set("ppo.normalize_advantages", "false").unwrap();
        let mut d = RunConfig::default();
        d.apply_text(&c.to_text()).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn precedence_file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "seed = 5\nenv.fee_rate = 0.01\n").unwrap();
        let c = RunConfig::resolve(Some(&path), &[("seed".into(), "9".into())]).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.env.fee_rate, 0.01);
        assert_eq!(c.ppo.gamma, 0.99);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_errors() {
        let mut c = RunConfig::default();
        assert!(c.set("nope", "1").is_err());
        assert!(c.set("seed", "-1").is_err());
        assert!(RunConfig::resolve(None, &[("env.fee_rate".into(), "1.5".into())]).is_err());
        assert_eq!(
            parse_override("a.b = 3").unwrap(),
            ("a.b".into(), "3".into())
        );
        assert!(parse_override("ab").is_err());
    }
}

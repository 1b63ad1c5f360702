use rand::Rng as _;

use super::action::{ActionKind, DiscreteAction, Order};
use super::reward::omega_reward;
use super::trace::{EpisodeTrace, TraceRow};
use crate::data::MarketData;
use crate::seeding::{self, Rng};
use crate::{Error, Result};

/// Tolerance when rounding a quantity down to whole lots, so that e.g.
/// `0.375 / 0.125` does not floor to 2.
const LOT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    pub initial_cash: f64,
    pub fee_rate: f64,
    pub max_slippage: f64,
    pub min_unit: f64,
    pub amount_levels: usize,
    pub observation_window: usize,
    pub omega_window: usize,
    pub omega_threshold: f64,
    pub reward_cap: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            initial_cash: 10_000.0,
            fee_rate: 0.0025,
            max_slippage: 0.02,
            min_unit: 0.125,
            amount_levels: 8,
            observation_window: 10,
            omega_window: 60,
            omega_threshold: 0.0,
            reward_cap: 10.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let rate = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be in [0, 1), got {v}")))
            }
        };
        rate("fee_rate", self.fee_rate)?;
        rate("max_slippage", self.max_slippage)?;
        if !(self.initial_cash > 0.0 && self.initial_cash.is_finite()) {
            return Err(Error::invalid("initial_cash must be positive"));
        }
        if !(self.min_unit > 0.0 && self.min_unit.is_finite()) {
            return Err(Error::invalid("min_unit must be positive"));
        }
        if self.amount_levels == 0 {
            return Err(Error::invalid("amount_levels must be at least 1"));
        }
        if self.observation_window < 2 || self.omega_window < 2 {
            return Err(Error::invalid("observation and omega windows must be >= 2"));
        }
        if !(self.reward_cap > 0.0) {
            return Err(Error::invalid("reward_cap must be positive"));
        }
        Ok(())
    }

    pub fn n_actions(&self) -> usize {
        3 * self.amount_levels
    }

    pub fn obs_dim(&self) -> usize {
        self.observation_window + 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Portfolio {
    pub cash: f64,
    pub holdings: f64,
}

pub fn mark_to_market(portfolio: &Portfolio, price: f64) -> f64 {
    portfolio.cash + portfolio.holdings * price
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub price_features: Vec<f64>,
    /// `[cash / net_worth, holdings_value / net_worth]`
    pub account_features: [f64; 2],
}

impl Observation {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.price_features.clone();
        v.extend_from_slice(&self.account_features);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// What actually happened; infeasible trades show up as holds.
    pub kind: ActionKind,
    pub level: usize,
    pub quantity: f64,
    pub exec_price: f64,
    pub fee: f64,
    pub cash: f64,
    pub holdings: f64,
    pub net_worth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Minimal episodic protocol the PPO trainer runs against.
pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Starts a new episode and returns the first observation.
    fn reset(&mut self) -> Result<Vec<f64>>;
    /// Returns `(observation, reward, done)`.
    fn step(&mut self, action: usize) -> Result<(Vec<f64>, f64, bool)>;
}

/// Decisions happen at candle `t` and execute at `close[t]` (with slippage);
/// the portfolio is then marked at `close[t + 1]`. An episode has
/// `len - 1` steps.
#[derive(Debug, Clone)]
pub struct TradingEnv {
    config: EnvConfig,
    data: MarketData,
    base_seed: u64,
    episodes: u64,
    rng: Rng,
    cursor: usize,
    cash: f64,
    lots: u64,
    history: Vec<f64>,
    trace: Vec<TraceRow>,
}

impl TradingEnv {
    /// Validates inputs and resets with `seed`.
    pub fn new(config: EnvConfig, data: MarketData, seed: u64) -> Result<Self> {
        config.validate()?;
        let needed = config.observation_window + 2;
        if data.len() < needed {
            return Err(Error::TooShort {
                needed,
                got: data.len(),
            });
        }
        if data.timestamps.len() != data.len() || data.features.len() != data.len() {
            return Err(Error::Shape("market data columns disagree".into()));
        }
        if let Some(p) = data.closes.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return Err(Error::invalid(format!(
                "close prices must be positive, got {p}"
            )));
        }
        let mut env = Self {
            config,
            data,
            base_seed: seed,
            episodes: 0,
            rng: seeding::rng(seed),
            cursor: 0,
            cash: 0.0,
            lots: 0,
            history: Vec::new(),
            trace: Vec::new(),
        };
        env.reset_seeded(seed);
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn data(&self) -> &MarketData {
        &self.data
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn is_done(&self) -> bool {
        self.cursor + 1 >= self.data.len()
    }

    /// Number of decisions in one episode.
    pub fn episode_len(&self) -> usize {
        self.data.len() - 1
    }

    pub fn portfolio(&self) -> Portfolio {
        Portfolio {
            cash: self.cash,
            holdings: self.holdings(),
        }
    }

    pub fn net_worth(&self) -> f64 {
        mark_to_market(&self.portfolio(), self.data.closes[self.cursor])
    }

    pub fn net_worth_history(&self) -> &[f64] {
        &self.history
    }

    fn holdings(&self) -> f64 {
        self.lots as f64 * self.config.min_unit
    }

    /// Back to full cash at the first candle; the slippage stream restarts
    /// from `seed`.
    pub fn reset_seeded(&mut self, seed: u64) -> Observation {
        self.rng = seeding::rng(seed);
        self.cursor = 0;
        self.cash = self.config.initial_cash;
        self.lots = 0;
        self.history = vec![self.config.initial_cash];
        self.trace.clear();
        self.observation()
    }

    /// Price features of the trailing window (zero-padded before the first
    /// candle) plus the account split.
    pub fn observation(&self) -> Observation {
        let w = self.config.observation_window;
        let t = self.cursor;
        let mut price_features = vec![0.0; w];
        let take = (t + 1).min(w);
        price_features[w - take..].copy_from_slice(&self.data.features[t + 1 - take..=t]);
        let close = self.data.closes[t];
        let value = self.holdings() * close;
        let nw = self.cash + value;
        let account_features = if nw > 0.0 {
            let h = (value / nw).clamp(0.0, 1.0);
            [1.0 - h, h]
        } else {
            [1.0, 0.0]
        };
        Observation {
            price_features,
            account_features,
        }
    }

    /// Agent step with a flat action index.
    pub fn step_index(&mut self, index: usize) -> Result<StepResult> {
        let action = DiscreteAction::decode(index, self.config.amount_levels)?;
        self.step_action(action)
    }

    pub fn step_action(&mut self, action: DiscreteAction) -> Result<StepResult> {
        if action.level == 0 || action.level > self.config.amount_levels {
            return Err(Error::invalid(format!(
                "level {} out of range",
                action.level
            )));
        }
        let frac = action.level as f64 / self.config.amount_levels as f64;
        let levels = self.config.amount_levels as u64;
        self.execute(action.level, move |env, price| match action.kind {
            ActionKind::Buy => {
                let budget = frac * env.cash;
                (ActionKind::Buy, env.affordable_lots(budget, price))
            }
            ActionKind::Sell => (ActionKind::Sell, (action.level as u64 * env.lots) / levels),
            ActionKind::Hold => (ActionKind::Hold, 0),
        })
    }

    /// Strategy step with an explicit quantity.
    pub fn step_order(&mut self, order: Order) -> Result<StepResult> {
        let lot = self.config.min_unit;
        let to_lots = |q: f64| -> Result<u64> {
            if !(q >= 0.0 && q.is_finite()) {
                return Err(Error::invalid(format!("order quantity {q}")));
            }
            Ok((q / lot + LOT_EPS).floor() as u64)
        };
        let (kind, want) = match order {
            Order::Hold => (ActionKind::Hold, 0),
            Order::Buy(q) => (ActionKind::Buy, to_lots(q)?),
            Order::Sell(q) => (ActionKind::Sell, to_lots(q)?),
            Order::BuyMax => (ActionKind::Buy, u64::MAX),
            Order::SellAll => (ActionKind::Sell, u64::MAX),
        };
        self.execute(0, move |env, price| match kind {
            ActionKind::Buy => (kind, want.min(env.affordable_lots(env.cash, price))),
            ActionKind::Sell => (kind, want.min(env.lots)),
            ActionKind::Hold => (kind, 0),
        })
    }

    /// Whole lots purchasable for at most `budget`, never exceeding cash.
    fn affordable_lots(&self, budget: f64, price: f64) -> u64 {
        let lot = self.config.min_unit;
        let unit_cost = price * (1.0 + self.config.fee_rate);
        let mut n = (budget / unit_cost / lot + LOT_EPS).floor().max(0.0) as u64;
        while n > 0 && self.buy_cost(n, price) > self.cash.min(budget) {
            n -= 1;
        }
        n
    }

    fn buy_cost(&self, lots: u64, price: f64) -> f64 {
        let notional = lots as f64 * self.config.min_unit * price;
        notional + notional * self.config.fee_rate
    }

    /// `plan` sees the slipped buy price and returns the side and lot count.
    fn execute<F>(&mut self, level: usize, plan: F) -> Result<StepResult>
    where
        F: FnOnce(&Self, f64) -> (ActionKind, u64),
    {
        if self.is_done() {
            return Err(Error::EpisodeDone);
        }
        let t = self.cursor;
        let close = self.data.closes[t];
        // one draw every step, traded or not, keeps runs with different
        // actions on the same slippage path
        let s = if self.config.max_slippage > 0.0 {
            self.rng.random_range(0.0..=self.config.max_slippage)
        } else {
            0.0
        };
        let buy_price = close * (1.0 + s);
        let sell_price = close * (1.0 - s);

        let (kind, lots) = plan(self, buy_price);
        let (kind, lots) = if lots == 0 {
            (ActionKind::Hold, 0)
        } else {
            (kind, lots)
        };

        let mut fee = 0.0;
        let mut exec_price = close;
        let quantity = lots as f64 * self.config.min_unit;
        match kind {
            ActionKind::Buy => {
                exec_price = buy_price;
                let notional = quantity * exec_price;
                fee = notional * self.config.fee_rate;
                self.cash -= notional + fee;
                self.lots += lots;
            }
            ActionKind::Sell => {
                exec_price = sell_price;
                let notional = quantity * exec_price;
                fee = notional * self.config.fee_rate;
                self.cash += notional - fee;
                self.lots -= lots;
            }
            ActionKind::Hold => {}
        }
        if self.cash < 0.0 {
            // affordable_lots guarantees cost <= cash, so this is rounding only
            debug_assert!(self.cash > -1e-6);
            self.cash = 0.0;
        }

        self.cursor += 1;
        let mark = self.data.closes[self.cursor];
        let net_worth = self.cash + self.holdings() * mark;
        self.history.push(net_worth);
        let reward = omega_reward(
            &self.history,
            self.config.omega_window,
            self.config.omega_threshold,
            self.config.reward_cap,
        );
        let info = StepInfo {
            kind,
            level,
            quantity,
            exec_price,
            fee,
            cash: self.cash,
            holdings: self.holdings(),
            net_worth,
        };
        self.trace.push(TraceRow {
            step: t,
            timestamp: self.data.timestamps[self.cursor],
            close: mark,
            action_kind: kind,
            level,
            exec_price,
            quantity,
            fee,
            cash: self.cash,
            holdings: info.holdings,
            net_worth,
            reward,
        });
        Ok(StepResult {
            observation: self.observation(),
            reward,
            done: self.is_done(),
            info,
        })
    }

    pub fn trace(&self) -> EpisodeTrace {
        EpisodeTrace {
            initial_cash: self.config.initial_cash,
            rows: self.trace.clone(),
        }
    }
}

impl Environment for TradingEnv {
    fn obs_dim(&self) -> usize {
        self.config.obs_dim()
    }

    fn n_actions(&self) -> usize {
        self.config.n_actions()
    }

    /// Each episode gets its own slippage stream derived from the
    /// construction seed.
    fn reset(&mut self) -> Result<Vec<f64>> {
        let seed = if self.episodes == 0 {
            self.base_seed
        } else {
            seeding::derive_indexed(self.base_seed, &[self.episodes])
        };
        self.episodes += 1;
        Ok(self.reset_seeded(seed).to_vec())
    }

    fn step(&mut self, action: usize) -> Result<(Vec<f64>, f64, bool)> {
        let r = self.step_index(action)?;
        Ok((r.observation.to_vec(), r.reward, r.done))
    }
}

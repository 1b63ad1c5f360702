//! The five rule-based benchmarks, run through the same environment as the
//! agent.

use crate::data::{denormalize_value, normalize_value, MarketData, NormalizationParams};
use crate::env::{EnvConfig, EpisodeTrace, Order, TradingEnv};
use crate::nn::{Forecaster, LinearModel};
use crate::report::profit_rate;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyParams {
    /// Cross threshold in percent.
    pub r0: f64,
    pub u_cross: f64,
    pub u_flat: f64,
    /// VMA long window.
    pub n: usize,
    pub short_window: usize,
    pub long_window: usize,
}

impl Default for StrategyParams {
    fn default() -> Self {
        Self {
            r0: 5.0,
            u_cross: 0.05,
            u_flat: 0.25,
            n: 50,
            short_window: 5,
            long_window: 20,
        }
    }
}

impl StrategyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r0 > 0.0 && self.u_cross > 0.0 && self.u_flat > 0.0) {
            return Err(Error::invalid(
                "strategy thresholds and lots must be positive",
            ));
        }
        if self.short_window == 0 || self.short_window >= self.long_window || self.n == 0 {
            return Err(Error::invalid(
                "need 0 < short_window < long_window and n > 0",
            ));
        }
        Ok(())
    }
}

/// Which benchmark, with its table label and file slug.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    BuyAndHold,
    GoldenCross,
    Vma,
    Momentum,
    NonNamedBuy,
    NonNamedSell,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::BuyAndHold,
        StrategyKind::GoldenCross,
        StrategyKind::Vma,
        StrategyKind::Momentum,
        StrategyKind::NonNamedBuy,
        StrategyKind::NonNamedSell,
    ];

    pub fn label(self) -> &'static str {
        match self {
            StrategyKind::BuyAndHold => "Buy and Hold Strategy",
            StrategyKind::GoldenCross => "Golden Cross/Death Cross Strategy",
            StrategyKind::Vma => "VMA Oscillator-based Strategy",
            StrategyKind::Momentum => "Improved Momentum Strategy",
            StrategyKind::NonNamedBuy => "Non-named Strategy (i Buy)",
            StrategyKind::NonNamedSell => "Non-named Strategy (ii Sell)",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            StrategyKind::BuyAndHold => "buy_and_hold",
            StrategyKind::GoldenCross => "golden_cross",
            StrategyKind::Vma => "vma",
            StrategyKind::Momentum => "momentum",
            StrategyKind::NonNamedBuy => "non_named_i",
            StrategyKind::NonNamedSell => "non_named_ii",
        }
    }

    pub fn from_slug(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.slug() == s)
    }

    pub fn needs_predictor(self) -> bool {
        matches!(
            self,
            StrategyKind::Momentum | StrategyKind::NonNamedBuy | StrategyKind::NonNamedSell
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyTrace {
    pub kind: StrategyKind,
    pub trace: EpisodeTrace,
    pub profit_rate: f64,
}

/// Something that maps the price history up to `t` onto a guess of the
/// price at `t + 1`. `None` means not enough history yet.
pub trait PricePredictor {
    fn predict_next(&self, closes: &[f64], t: usize) -> Result<Option<f64>>;
}

/// Maps a window of scaled diffs onto the next scaled diff.
pub trait WindowModel {
    fn window(&self) -> usize;
    fn predict_window(&self, window: &[f64]) -> Result<f64>;
}

impl WindowModel for Forecaster {
    fn window(&self) -> usize {
        self.config.window
    }

    fn predict_window(&self, window: &[f64]) -> Result<f64> {
        self.predict(window)
    }
}

/// A least-squares model paired with the window length it was fit on.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearWindowModel {
    pub model: LinearModel,
}

impl WindowModel for LinearWindowModel {
    fn window(&self) -> usize {
        self.model.weights.len()
    }

    fn predict_window(&self, window: &[f64]) -> Result<f64> {
        if window.len() != self.window() {
            return Err(Error::Shape(format!(
                "linear model expects windows of {}, got {}",
                self.window(),
                window.len()
            )));
        }
        Ok(self.model.predict(window))
    }
}

/// difference -> normalize -> model -> denormalize -> add to the last price.
pub struct ForecastChain<M> {
    pub model: M,
    pub normalization: NormalizationParams,
}

impl<M: WindowModel> ForecastChain<M> {
    pub fn new(model: M, normalization: NormalizationParams) -> Result<Self> {
        normalization.validate()?;
        Ok(Self {
            model,
            normalization,
        })
    }

    /// The model input for decision time `t`: the last `window` diffs, scaled.
    pub fn input_window(&self, closes: &[f64], t: usize) -> Option<Vec<f64>> {
        let w = self.model.window();
        if t < w || t >= closes.len() {
            return None;
        }
        Some(
            (t + 1 - w..=t)
                .map(|j| normalize_value(closes[j] - closes[j - 1], &self.normalization))
                .collect(),
        )
    }

    /// Next price given the scaled next diff.
    pub fn reconstruct(&self, closes: &[f64], t: usize, scaled_diff: f64) -> f64 {
        closes[t] + denormalize_value(scaled_diff, &self.normalization)
    }
}

impl<M: WindowModel> PricePredictor for ForecastChain<M> {
    fn predict_next(&self, closes: &[f64], t: usize) -> Result<Option<f64>> {
        match self.input_window(closes, t) {
            None => Ok(None),
            Some(w) => {
                let d = self.model.predict_window(&w)?;
                Ok(Some(self.reconstruct(closes, t, d)))
            }
        }
    }
}

/// Knows the future; for tests and upper bounds.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    pub closes: Vec<f64>,
}

impl PricePredictor for OraclePredictor {
    fn predict_next(&self, _closes: &[f64], t: usize) -> Result<Option<f64>> {
        Ok(self.closes.get(t + 1).copied())
    }
}

/// Mean of one-step percent changes over the `window` changes ending at `t`.
pub fn mean_pct_change(closes: &[f64], t: usize, window: usize) -> f64 {
    (t + 1 - window..=t)
        .map(|j| (closes[j] - closes[j - 1]) / closes[j - 1] * 100.0)
        .sum::<f64>()
        / window as f64
}

/// `(1/n) sum_{i<n} log P_{t-i}`.
pub fn vma_long_ma(closes: &[f64], t: usize, n: usize) -> f64 {
    closes[t + 1 - n..=t].iter().map(|p| p.ln()).sum::<f64>() / n as f64
}

/// `log P_t - LongMA`, accumulated as a mean of log ratios so that a flat
/// window gives exactly zero.
fn vma_signal(closes: &[f64], t: usize, n: usize) -> f64 {
    let lt = closes[t].ln();
    closes[t + 1 - n..=t]
        .iter()
        .map(|p| lt - p.ln())
        .sum::<f64>()
        / n as f64
}

fn run<F>(
    kind: StrategyKind,
    data: &MarketData,
    env_cfg: &EnvConfig,
    seed: u64,
    mut decide: F,
) -> Result<StrategyTrace>
where
    F: FnMut(usize, &[f64]) -> Result<Order>,
{
    let mut env = TradingEnv::new(*env_cfg, data.clone(), seed)?;
    let closes = data.closes.clone();
    while !env.is_done() {
        let t = env.cursor();
        let order = decide(t, &closes)?;
        env.step_order(order)?;
    }
    let trace = env.trace();
    let profit_rate = profit_rate(&trace)?;
    Ok(StrategyTrace {
        kind,
        trace,
        profit_rate,
    })
}

/// Last step at which an order can still be placed.
fn last_decision(data: &MarketData) -> usize {
    data.len() - 2
}

pub fn buy_and_hold(data: &MarketData, env_cfg: &EnvConfig, seed: u64) -> Result<StrategyTrace> {
    let last = last_decision(data);
    run(StrategyKind::BuyAndHold, data, env_cfg, seed, |t, _| {
        Ok(if t == 0 {
            Order::BuyMax
        } else if t == last {
            Order::SellAll
        } else {
            Order::Hold
        })
    })
}

/// The signed cross strength `short - long` of mean percent changes at `t`.
pub fn cross_strength(closes: &[f64], t: usize, p: &StrategyParams) -> f64 {
    mean_pct_change(closes, t, p.short_window) - mean_pct_change(closes, t, p.long_window)
}

pub fn golden_death_cross(
    data: &MarketData,
    params: &StrategyParams,
    env_cfg: &EnvConfig,
    seed: u64,
) -> Result<StrategyTrace> {
    params.validate()?;
    if data.len() <= params.long_window + 1 {
        return Err(Error::TooShort {
            needed: params.long_window + 2,
            got: data.len(),
        });
    }
    run(StrategyKind::GoldenCross, data, env_cfg, seed, |t, c| {
        if t < params.long_window {
            return Ok(Order::Hold);
        }
        let d = cross_strength(c, t, params);
        Ok(if d > params.r0 {
            Order::Buy(d * params.u_cross)
        } else if -d > params.r0 {
            Order::Sell(-d * params.u_cross)
        } else {
            Order::Hold
        })
    })
}

pub fn vma_oscillator(
    data: &MarketData,
    params: &StrategyParams,
    env_cfg: &EnvConfig,
    seed: u64,
) -> Result<StrategyTrace> {
    params.validate()?;
    if data.len() <= params.n {
        return Err(Error::TooShort {
            needed: params.n + 1,
            got: data.len(),
        });
    }
    if data.closes.iter().any(|p| *p <= 0.0) {
        return Err(Error::invalid("VMA needs positive prices"));
    }
    let last = last_decision(data);
    run(StrategyKind::Vma, data, env_cfg, seed, |t, c| {
        Ok(if t == last {
            Order::SellAll
        } else if t >= params.n && vma_signal(c, t, params.n) > 0.0 {
            Order::Buy(params.u_flat)
        } else {
            Order::Hold
        })
    })
}

pub fn improved_momentum(
    data: &MarketData,
    predictor: &dyn PricePredictor,
    params: &StrategyParams,
    env_cfg: &EnvConfig,
    seed: u64,
) -> Result<StrategyTrace> {
    params.validate()?;
    run(StrategyKind::Momentum, data, env_cfg, seed, |t, c| {
        Ok(match predictor.predict_next(c, t)? {
            Some(p) if p > c[t] => Order::Buy(params.u_flat),
            Some(p) if p < c[t] => Order::Sell(params.u_flat),
            _ => Order::Hold,
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonNamedVariant {
    /// Start in cash, buy on a predicted rise.
    Buy,
    /// Start fully invested, sell on a predicted fall.
    Sell,
}

pub fn non_named(
    data: &MarketData,
    predictor: &dyn PricePredictor,
    variant: NonNamedVariant,
    params: &StrategyParams,
    env_cfg: &EnvConfig,
    seed: u64,
) -> Result<StrategyTrace> {
    params.validate()?;
    let last = last_decision(data);
    let kind = match variant {
        NonNamedVariant::Buy => StrategyKind::NonNamedBuy,
        NonNamedVariant::Sell => StrategyKind::NonNamedSell,
    };
    run(kind, data, env_cfg, seed, |t, c| {
        if t == last {
            return Ok(Order::SellAll);
        }
        if variant == NonNamedVariant::Sell && t == 0 {
            return Ok(Order::BuyMax);
        }
        let pred = predictor.predict_next(c, t)?;
        Ok(match (variant, pred) {
            (NonNamedVariant::Buy, Some(p)) if p > c[t] => Order::Buy(params.u_flat),
            (NonNamedVariant::Sell, Some(p)) if p < c[t] => Order::Sell(params.u_flat),
            _ => Order::Hold,
        })
    })
}

/// Runs one benchmark; forecast-driven kinds need `predictor`.
pub fn run_strategy(
    kind: StrategyKind,
    data: &MarketData,
    predictor: Option<&dyn PricePredictor>,
    params: &StrategyParams,
    env_cfg: &EnvConfig,
    seed: u64,
) -> Result<StrategyTrace> {
    let need =
        || predictor.ok_or_else(|| Error::invalid(format!("{} needs a forecaster", kind.slug())));
    match kind {
        StrategyKind::BuyAndHold => buy_and_hold(data, env_cfg, seed),
        StrategyKind::GoldenCross => golden_death_cross(data, params, env_cfg, seed),
        StrategyKind::Vma => vma_oscillator(data, params, env_cfg, seed),
        StrategyKind::Momentum => improved_momentum(data, need()?, params, env_cfg, seed),
        StrategyKind::NonNamedBuy => {
            non_named(data, need()?, NonNamedVariant::Buy, params, env_cfg, seed)
        }
        StrategyKind::NonNamedSell => {
            non_named(data, need()?, NonNamedVariant::Sell, params, env_cfg, seed)
        }
    }
}

//! One test per acceptance criterion. Timed criteria run one at a time so
//! that the budgets measure the work itself rather than contention.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use ppo_trader_core::data::{
    adf_test, chronological_split, denormalize, difference, invert_difference, make_windows,
    minmax_normalize, prepare, Candle, CandleSeries, MarketData, PreprocessOptions, SplitSpec,
};
use ppo_trader_core::env::{
    mark_to_market, omega_ratio, omega_reward, ActionKind, DiscreteAction, EnvConfig, Environment,
    EpisodeTrace, Portfolio, TradingEnv,
};
use ppo_trader_core::nn::gradcheck::{check_gradients, GradCheck, GradCheckReport};
use ppo_trader_core::nn::{
    baseline_forecasters, dense_forward, lstm_cell_forward, lstm_sequence_backward,
    train_forecaster, Activation, DenseParams, ForecasterConfig, LstmCellParams, LstmStack,
    LstmState, Parameterized, TrainSchedule,
};
use ppo_trader_core::ppo::{
    action_probability, clip, clipped_surrogate, collect_rollout, combined_loss, compute_gae,
    evaluate_agent, probability_ratio, train_agent, BanditEnv, PolicyNet, PpoConfig, RolloutBuffer,
    RolloutCursor, SequenceBatch,
};
use ppo_trader_core::seeding;
use ppo_trader_core::strategies::{
    buy_and_hold, golden_death_cross, improved_momentum, non_named, run_strategy, vma_oscillator,
    NonNamedVariant, OraclePredictor, PricePredictor, StrategyKind, StrategyParams, StrategyTrace,
};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn within(start: Instant, budget: Duration, what: &str) {
    let took = start.elapsed();
    eprintln!("{what}: {took:.2?} (budget {budget:?})");
    assert!(took < budget, "{what} took {took:.2?}, budget {budget:?}");
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn uniform(rng: &mut seeding::Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn price_path(n: usize, seed: u64, step: f64) -> Vec<f64> {
    let mut rng = seeding::rng(seed);
    let mut p = 100.0;
    (0..n)
        .map(|_| {
            p *= 1.0 + rng.random_range(-step..step);
            p
        })
        .collect()
}

fn market(closes: Vec<f64>) -> MarketData {
    MarketData::from_closes((0..closes.len() as i64).collect(), closes)
}

fn frictionless() -> EnvConfig {
    EnvConfig {
        fee_rate: 0.0,
        max_slippage: 0.0,
        ..EnvConfig::default()
    }
}

// ---------------------------------------------------------------- gradients

fn lstm_cell_point(seed: u64) -> GradCheckReport {
    let mut rng = seeding::rng(seed);
    let (input, hidden, steps) = (3, 5, 7);
    let p = LstmCellParams::init(input, hidden, &mut rng);
    let xs: Vec<Vec<f64>> = (0..steps)
        .map(|_| uniform(&mut rng, input, -1.0, 1.0))
        .collect();
    let coef: Vec<Vec<f64>> = (0..steps)
        .map(|_| uniform(&mut rng, hidden, -1.0, 1.0))
        .collect();
    let init = LstmState {
        m: uniform(&mut rng, hidden, -0.5, 0.5),
        c: uniform(&mut rng, hidden, -0.5, 0.5),
    };
    let loss = |q: &LstmCellParams| -> f64 {
        let mut s = init.clone();
        let mut total = 0.0;
        for (x, w) in xs.iter().zip(&coef) {
            s = lstm_cell_forward(x, &s, q).unwrap().0;
            total += s.m.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        }
        total
    };
    let mut s = init.clone();
    let mut caches = Vec::new();
    for x in &xs {
        let (next, cache) = lstm_cell_forward(x, &s, &p).unwrap();
        caches.push(cache);
        s = next;
    }
    let mut g = p.zeros_like();
    lstm_sequence_backward(&coef, &caches, &[], &p, &mut g).unwrap();
    check_gradients(&p, &g, loss, GradCheck::default())
}

/// Two stacked layers with ReLU, dropout between them and a mid-sequence reset.
fn lstm_stack_point(seed: u64) -> GradCheckReport {
    let mut rng = seeding::rng(seed);
    let stack = LstmStack::init(2, 4, 2, &mut rng);
    let xs: Vec<Vec<f64>> = (0..6).map(|_| uniform(&mut rng, 2, -1.0, 1.0)).collect();
    let coef: Vec<Vec<f64>> = (0..6).map(|_| uniform(&mut rng, 4, -1.0, 1.0)).collect();
    let resets = [false, false, false, true, false, false];
    let init = stack.zero_state();
    let mask_seed = seed ^ 0xdead;
    let run = |s: &LstmStack| {
        let mut mask_rng = seeding::rng(mask_seed);
        s.forward_sequence(&xs, &init, &resets, Some((0.3, &mut mask_rng)))
            .unwrap()
    };
    let loss = |s: &LstmStack| -> f64 {
        run(s)
            .0
            .iter()
            .zip(&coef)
            .map(|(o, w)| o.iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    };
    let (_, _, cache) = run(&stack);
    let mut g = stack.zeros_like();
    stack.backward_sequence(&coef, &cache, &mut g).unwrap();
    check_gradients(&stack, &g, loss, GradCheck::default())
}

fn dense_point(seed: u64) -> GradCheckReport {
    let acts = [
        Activation::Linear,
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Softmax,
    ];
    let mut rng = seeding::rng(seed);
    let act = acts[seed as usize % acts.len()];
    let p = DenseParams::init(6, 4, act, &mut rng);
    let x = uniform(&mut rng, 6, -2.0, 2.0);
    let coef = uniform(&mut rng, 4, -1.0, 1.0);
    let loss = |q: &DenseParams| -> f64 {
        let y = dense_forward(&x, q).unwrap();
        y.iter().zip(&coef).map(|(y, c)| c * y * y).sum()
    };
    let (y, cache) = p.forward(&x).unwrap();
    let dy: Vec<f64> = y.iter().zip(&coef).map(|(y, c)| 2.0 * c * y).collect();
    let mut g = p.zeros_like();
    p.backward(&dy, &cache, &mut g);
    check_gradients(&p, &g, loss, GradCheck::default())
}

fn rollout(policy: &PolicyNet, seed: u64, horizon: usize) -> RolloutBuffer {
    let mut env = TradingEnv::new(
        EnvConfig::default(),
        market(price_path(120, seed, 0.02)),
        seed,
    )
    .unwrap();
    let mut cursor = RolloutCursor::start(&mut env, policy).unwrap();
    collect_rollout(
        &mut env,
        policy,
        horizon,
        &mut cursor,
        &mut seeding::rng(seed),
    )
    .unwrap()
}

fn jitter(p: &PolicyNet, scale: f64, seed: u64) -> PolicyNet {
    let mut q = p.clone();
    let mut rng = seeding::rng(seed);
    for t in q.tensors_mut() {
        for v in t.as_mut_slice() {
            *v += rng.random_range(-scale..scale);
        }
    }
    q
}

fn combined_loss_point(seed: u64) -> GradCheckReport {
    let old = jitter(&PolicyNet::new(12, 24, 6, 2, 100 + seed), 0.2, seed);
    let mut buf = rollout(&old, 200 + seed, 150);
    let mut rng = seeding::rng(300 + seed);
    buf.advantages = uniform(&mut rng, buf.len(), -2.0, 2.0);
    buf.returns = uniform(&mut rng, buf.len(), -1.0, 1.0);
    let batch = SequenceBatch::from_buffer(&buf, 90, 140).unwrap();
    // move away from the rollout parameters so ratios leave the clip range
    let p = jitter(&old, 0.05, 400 + seed);
    let cfg = PpoConfig {
        c2: 0.05,
        ..PpoConfig::default()
    };
    let mut g = p.zeros_like();
    combined_loss(&p, &batch, &cfg, Some(&mut g)).unwrap();
    check_gradients(
        &p,
        &g,
        |q| combined_loss(q, &batch, &cfg, None).unwrap().total,
        GradCheck {
            stride: 3,
            ..GradCheck::default()
        },
    )
}

#[test]
fn gradient_correctness() {
    let _g = serial();
    let start = Instant::now();
    type Point = fn(u64) -> GradCheckReport;
    let cases: [(&str, Point); 4] = [
        ("lstm cell bptt", lstm_cell_point),
        ("lstm stack", lstm_stack_point),
        ("dense", dense_point),
        ("combined ppo loss", combined_loss_point),
    ];
    for (name, point) in cases {
        let mut worst = 0.0f64;
        for seed in 0..10 {
            let r = point(seed);
            assert!(r.checked > 0);
            assert!(r.max_rel_error < 1e-4, "{name} point {seed}: {r:?}");
            worst = worst.max(r.max_rel_error);
        }
        eprintln!("{name}: worst relative error {worst:.2e} over 10 points");
    }
    within(start, secs(60), "gradient correctness");
}

// ---------------------------------------------------------------- ppo maths

#[test]
fn gae_equals_direct_discounted_sum() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = seeding::rng(1);
    for _ in 0..100 {
        let n = 50;
        let gamma = rng.random_range(0.0..1.0);
        let rewards = uniform(&mut rng, n, -1.0, 1.0);
        let values = uniform(&mut rng, n, -1.0, 1.0);
        let bootstrap = rng.random_range(-1.0..1.0);
        let (adv, _) =
            compute_gae(&rewards, &values, &vec![false; n], bootstrap, gamma, 1.0).unwrap();
        for t in 0..n {
            let mut direct = -values[t];
            let mut discount = 1.0;
            for r in &rewards[t..] {
                direct += discount * r;
                discount *= gamma;
            }
            direct += discount * bootstrap;
            assert!(
                (adv[t] - direct).abs() <= 1e-10,
                "t={t}: {} vs {direct}",
                adv[t]
            );
        }
    }
    within(start, secs(5), "gae");
}

#[test]
fn clip_behavior_grid() {
    let _g = serial();
    let start = Instant::now();
    let mut points = 0;
    for i in 0..=3000 {
        let r = i as f64 / 1000.0;
        for a in [-2.0, -1.0, 1.0, 2.0] {
            for eps in [0.1, 0.2] {
                let unclipped = r * a;
                let clipped = clip(r, 1.0 - eps, 1.0 + eps) * a;
                let inside = r >= 1.0 - eps && r <= 1.0 + eps;
                assert_eq!(clipped == unclipped, inside, "r={r} A={a} eps={eps}");
                assert!(clipped_surrogate(r, a, eps) <= unclipped);
                assert_eq!(clipped_surrogate(r, a, eps), clipped.min(unclipped));
                points += 1;
            }
        }
    }
    assert_eq!(points, 3001 * 8);
    within(start, secs(1), "clip grid");
}

#[test]
fn ratio_is_one_under_unchanged_parameters() {
    let _g = serial();
    let start = Instant::now();
    for seed in 0..4u64 {
        let layers = 1 + seed as usize % 2;
        let policy = jitter(&PolicyNet::new(12, 24, 8, layers, seed), 0.3, seed);
        let mut buf = rollout(&policy, 10 + seed, 300);
        assert!(
            buf.dones.iter().any(|d| *d),
            "rollout should cross an episode end"
        );
        buf.advantages = vec![1.0; buf.len()];
        buf.returns = vec![0.0; buf.len()];
        let mut checked = 0;
        for s in (0..300).step_by(64) {
            let batch = SequenceBatch::from_buffer(&buf, s, (s + 64).min(300)).unwrap();
            let loss = combined_loss(&policy, &batch, &PpoConfig::default(), None).unwrap();
            assert!(loss.ratios.iter().all(|r| *r == 1.0));
            let (outs, _, _) = policy
                .forward_sequence(&batch.observations, &batch.init_state, &batch.resets)
                .unwrap();
            for (t, o) in outs.iter().enumerate() {
                let a = batch.actions[t];
                assert_eq!(
                    probability_ratio(o.log_probs[a], batch.old_log_probs[t]).unwrap(),
                    1.0
                );
                checked += 1;
            }
        }
        assert_eq!(checked, 300);
    }
    within(start, secs(5), "ratio identity");
}

// ---------------------------------------------------------------- reward

fn omega_oracle(history: &[f64], window: usize, r: f64, cap: f64) -> f64 {
    let first = history.len().saturating_sub(window + 1);
    let h = &history[first..];
    let mut up = 0.0;
    let mut down = 0.0;
    for i in 1..h.len() {
        let x = h[i] / h[i - 1] - 1.0;
        up += f64::max(x - r, 0.0);
        down += f64::max(r - x, 0.0);
    }
    (up / down).clamp(0.0, cap)
}

#[test]
fn omega_reward_matches_direct_sum() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = seeding::rng(5);
    let mut compared = 0;
    while compared < 1000 {
        let len = rng.random_range(3..120);
        let window = rng.random_range(2..=60);
        let r = if rng.random_bool(0.5) {
            0.0
        } else {
            rng.random_range(-0.005..0.005)
        };
        let history = price_path(len, rng.random(), 0.03);
        let cap = if rng.random_bool(0.5) { 10.0 } else { f64::MAX };
        let oracle = omega_oracle(&history, window, r, cap);
        if !oracle.is_finite() {
            continue;
        }
        let got = omega_reward(&history, window, r, cap);
        assert!(
            (got - oracle).abs() <= 1e-12 * oracle.max(1.0),
            "{got} vs {oracle}"
        );
        compared += 1;
    }

    // symmetric windows: every +a is matched by a -a
    for _ in 0..200 {
        let k = rng.random_range(1..15);
        let mut returns: Vec<f64> = Vec::new();
        for _ in 0..k {
            let a = rng.random_range(1..512) as f64 / 1024.0;
            returns.push(a);
            returns.push(-a);
        }
        returns.shuffle(&mut rng);
        let (gain, loss) = omega_ratio(&returns, 0.0);
        assert_eq!(gain / loss, 1.0);

        // the same through net-worth histories; few-bit returns keep every
        // price and every price ratio exact
        let mut returns: Vec<f64> = Vec::new();
        for _ in 0..rng.random_range(1..=8) {
            let a = [0.5, 0.25, 0.125][rng.random_range(0..3)];
            returns.push(a);
            returns.push(-a);
        }
        returns.shuffle(&mut rng);
        let mut history = vec![1.0];
        for x in &returns {
            let last: f64 = *history.last().unwrap();
            history.push(last * (1.0 + x));
        }
        assert_eq!(omega_reward(&history, returns.len(), 0.0, 10.0), 1.0);
    }
    within(start, secs(5), "omega");
}

// ---------------------------------------------------------------- environment

fn lot_multiple(q: f64) -> bool {
    let lots = q / 0.125;
    lots == lots.round()
}

#[test]
fn environment_accounting() {
    let _g = serial();
    let start = Instant::now();
    let closes = price_path(1501, 3, 0.03);
    let mut env = TradingEnv::new(EnvConfig::default(), market(closes.clone()), 4).unwrap();
    let mut rng = seeding::rng(6);
    let mut steps = 0;
    while steps < 10_000 {
        Environment::reset(&mut env).unwrap();
        while !env.is_done() && steps < 10_000 {
            let before = env.portfolio();
            let t = env.cursor();
            let r = env.step_index(rng.random_range(0..24)).unwrap();
            let i = r.info;
            let notional = i.quantity * i.exec_price;
            match i.kind {
                ActionKind::Buy => {
                    assert!((before.cash - (i.cash + i.fee + notional)).abs() <= 1e-9)
                }
                ActionKind::Sell => {
                    assert!((i.cash - (before.cash + notional - i.fee)).abs() <= 1e-9)
                }
                ActionKind::Hold => {
                    assert_eq!((i.cash, i.holdings), (before.cash, before.holdings))
                }
            }
            assert!(i.cash >= 0.0 && i.holdings >= 0.0);
            assert!(lot_multiple(i.holdings) && lot_multiple(i.quantity));
            let mark = mark_to_market(
                &Portfolio {
                    cash: i.cash,
                    holdings: i.holdings,
                },
                closes[t + 1],
            );
            assert_eq!(mark, i.net_worth);
            assert!(r.reward.is_finite() && (0.0..=10.0).contains(&r.reward));
            steps += 1;
        }
    }

    // frictionless buy then sell at an unchanged price
    for level in 1..=8 {
        for price in [0.37, 123.0, 9_876.5, 61_234.56] {
            let mut env =
                TradingEnv::new(frictionless(), market(vec![price; 20]), level as u64).unwrap();
            let before = env.net_worth();
            env.step_action(DiscreteAction {
                kind: ActionKind::Buy,
                level,
            })
            .unwrap();
            let r = env
                .step_action(DiscreteAction {
                    kind: ActionKind::Sell,
                    level: 8,
                })
                .unwrap();
            assert_eq!(r.info.holdings, 0.0);
            assert!(
                (r.info.net_worth - before).abs() <= 1e-9,
                "{level} @ {price}"
            );
        }
    }
    within(start, secs(30), "environment accounting");
}

// ---------------------------------------------------------------- preprocessing

#[test]
fn preprocessing_round_trips() {
    let _g = serial();
    let start = Instant::now();
    for seed in 0..20 {
        let prices = {
            let mut p = price_path(1000, seed, 0.05);
            p.iter_mut().for_each(|v| *v *= 300.0);
            p
        };
        let (d, state) = difference(&prices).unwrap();
        assert_eq!(invert_difference(&d, state).unwrap(), prices);

        let mut rng = seeding::rng(seed + 50);
        let values = uniform(&mut rng, 1000, -1e4, 1e4);
        let (scaled, params) = minmax_normalize(&values, 0.0, 1.0).unwrap();
        let back = denormalize(&scaled, &params).unwrap();
        for (a, b) in back.iter().zip(&values) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }

        let idx: Vec<usize> = (0..1000).collect();
        let (tr, va, te) = chronological_split(&idx, &SplitSpec::default()).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (700, 100, 200));
        assert_eq!([tr, va, te].concat(), idx);

        let candles: Vec<Candle> = prices
            .iter()
            .enumerate()
            .map(|(i, &c)| Candle {
                timestamp: 1_600_000_000 + 60 * i as i64,
                open: c,
                high: c,
                low: c,
                close: c,
                volume: 1.0,
            })
            .collect();
        let (series, dropped) = CandleSeries::from_candles(candles).unwrap();
        assert_eq!(dropped, 0);
        let prep = prepare(&series, &PreprocessOptions::default()).unwrap();
        let joined: Vec<f64> = [&prep.train.closes, &prep.valid.closes, &prep.test.closes]
            .into_iter()
            .flatten()
            .copied()
            .collect();
        assert_eq!(joined, prices[1..]);
        let train_max = prep.train.features.iter().copied().fold(f64::MIN, f64::max);
        let train_min = prep.train.features.iter().copied().fold(f64::MAX, f64::min);
        assert_eq!((train_min, train_max), (0.0, 1.0));
    }
    within(start, secs(5), "preprocessing");
}

// ---------------------------------------------------------------- adf

#[test]
fn adf_calibration() {
    let _g = serial();
    let start = Instant::now();
    let mut walks_kept = 0;
    let mut noise_rejected = 0;
    for seed in 0..100 {
        let mut rng = seeding::rng(10_000 + seed);
        let e: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
        if adf_test(&e, 0).unwrap().reject_unit_root {
            noise_rejected += 1;
        }
        let walk: Vec<f64> = e
            .iter()
            .scan(0.0, |s, x| {
                *s += x;
                Some(*s)
            })
            .collect();
        if !adf_test(&walk, 0).unwrap().reject_unit_root {
            walks_kept += 1;
        }
    }
    eprintln!(
        "random walks not rejected: {walks_kept}/100; white noise rejected: {noise_rejected}/100"
    );
    assert!(walks_kept >= 90);
    assert!(noise_rejected >= 95);
    within(start, secs(30), "adf");
}

// ---------------------------------------------------------------- forecaster

#[test]
fn forecaster_beats_persistence_on_a_sine() {
    let _g = serial();
    let start = Instant::now();
    let series: Vec<f64> = (0..2000)
        .map(|i| (i as f64 * 2.0 * PI / 40.0).sin())
        .collect();
    let (scaled, _) = minmax_normalize(&series, 0.0, 1.0).unwrap();
    let windows = make_windows(&scaled, 10).unwrap();
    let n = windows.len();
    let (train, rest) = windows.split_at(n * 7 / 10);
    let (valid, test) = rest.split_at(n / 10);
    let schedule = TrainSchedule {
        max_epochs: 60,
        ..TrainSchedule::default()
    };
    let out = train_forecaster(&ForecasterConfig::default(), train, valid, &schedule, 1).unwrap();
    assert!(out.history.len() <= 60);
    let mse = out.model.evaluate_mse(test).unwrap();
    let base = baseline_forecasters(train, test).unwrap();
    eprintln!(
        "test mse {mse:.3e}, persistence {:.3e} ({:.0}x) after {} epochs",
        base.persistence_mse,
        base.persistence_mse / mse,
        out.history.len()
    );
    assert!(mse * 10.0 <= base.persistence_mse);
    within(start, secs(180), "forecaster");
}

// ---------------------------------------------------------------- ppo learning

#[test]
fn ppo_learns_the_bandit() {
    let _g = serial();
    let start = Instant::now();
    let cfg = PpoConfig {
        horizon: 128,
        minibatch_size: 32,
        learning_rate: 3e-3,
        total_iterations: 50,
        ..PpoConfig::default()
    };
    let mut wins = 0;
    for seed in 0..5 {
        let mut env = BanditEnv::new(24, 16);
        let out = train_agent(&mut env, &cfg, seed).unwrap();
        assert_eq!(out.log.len(), 50);
        let p = action_probability(&out.policy, &mut env, 0).unwrap();
        eprintln!("bandit seed {seed}: p(rewarding action) = {p:.4}");
        if p > 0.9 {
            wins += 1;
        }
    }
    assert!(wins >= 4, "{wins}/5 seeds");
    within(start, secs(180), "ppo bandit");
}

/// Sine price with whole periods between the first and the liquidating step,
/// so buy-and-hold ends flat and beating it requires actual timing.
fn periodic_market(n: usize, period: f64) -> MarketData {
    let closes: Vec<f64> = (0..n)
        .map(|i| 100.0 + 10.0 * (i as f64 * 2.0 * PI / period).sin())
        .collect();
    let diffs: Vec<f64> = closes.windows(2).map(|w| w[1] - w[0]).collect();
    let (scaled, _) = minmax_normalize(&diffs, 0.0, 1.0).unwrap();
    let mut features = vec![0.5];
    features.extend(scaled);
    MarketData {
        timestamps: (0..n as i64).collect(),
        closes,
        features,
    }
}

#[test]
fn ppo_beats_buy_and_hold_on_a_periodic_price() {
    let _g = serial();
    let start = Instant::now();
    let cfg = frictionless();
    let data = periodic_market(202, 20.0);
    let bh = buy_and_hold(&data, &cfg, 0).unwrap().profit_rate;
    let ppo = PpoConfig {
        total_iterations: 500,
        ..PpoConfig::default()
    };
    let mut wins = 0;
    for seed in 0..5u64 {
        let mut env = TradingEnv::new(cfg, data.clone(), seed).unwrap();
        let out = train_agent(&mut env, &ppo, seed).unwrap();
        assert!(out.diverged.is_none());
        let mut eval_env = TradingEnv::new(cfg, data.clone(), seed).unwrap();
        let ev = evaluate_agent(&out.policy, &mut eval_env, seed).unwrap();
        eprintln!(
            "periodic seed {seed}: agent {:.2}% vs buy-and-hold {bh:.2}%",
            ev.profit_rate
        );
        // a hair above, so rounding noise in the benchmark cannot decide it
        if ev.profit_rate > bh + 1e-6 {
            wins += 1;
        }
    }
    assert!(wins >= 4, "{wins}/5 seeds");
    within(start, secs(600), "ppo periodic");
}

// ---------------------------------------------------------------- strategies

fn trades(t: &EpisodeTrace) -> Vec<(usize, ActionKind, f64)> {
    t.rows
        .iter()
        .filter(|r| r.quantity > 0.0)
        .map(|r| (r.step, r.action_kind, r.quantity))
        .collect()
}

fn replayed_profit(t: &EpisodeTrace) -> f64 {
    let last = t.rows.last().unwrap();
    (last.cash + last.holdings * last.close - t.initial_cash) / t.initial_cash * 100.0
}

/// Percent changes +68 at `t0`, -36 at `t0 + 1`, +27 at `t0 + 5`.
fn engineered_cross(t0: usize, n: usize) -> Vec<f64> {
    let mut p = vec![100.0];
    for j in 1..n {
        let c = match j {
            _ if j == t0 => 68.0,
            _ if j == t0 + 1 => -36.0,
            _ if j == t0 + 5 => 27.0,
            _ => 0.0,
        };
        let last = *p.last().unwrap();
        p.push(last * (1.0 + c / 100.0));
    }
    p
}

#[test]
fn strategy_fixtures() {
    let _g = serial();
    let start = Instant::now();
    let params = StrategyParams::default();
    let cfg = EnvConfig::default();

    let flat = market(vec![250.0; 150]);
    let oracle = OraclePredictor {
        closes: flat.closes.clone(),
    };
    for s in [
        golden_death_cross(&flat, &params, &cfg, 1).unwrap(),
        vma_oscillator(&flat, &params, &cfg, 1).unwrap(),
        improved_momentum(&flat, &oracle, &params, &cfg, 1).unwrap(),
        non_named(&flat, &oracle, NonNamedVariant::Buy, &params, &cfg, 1).unwrap(),
    ] {
        assert!(
            trades(&s.trace).is_empty(),
            "{:?} traded on a flat series",
            s.kind
        );
    }
    // variant ii opens fully invested by definition; no signal trades follow
    let ii = non_named(&flat, &oracle, NonNamedVariant::Sell, &params, &cfg, 1).unwrap();
    let t = trades(&ii.trace);
    assert_eq!(t.len(), 2);
    assert_eq!((t[0].0, t[0].1), (0, ActionKind::Buy));
    assert_eq!((t[1].0, t[1].1), (flat.len() - 2, ActionKind::Sell));

    let cross = golden_death_cross(&market(engineered_cross(30, 80)), &params, &cfg, 2).unwrap();
    assert_eq!(trades(&cross.trace), vec![(30, ActionKind::Buy, 0.5)]);

    let rise = market((0..120).map(|i| 100.0 + i as f64).collect());
    let vma = vma_oscillator(&rise, &params, &frictionless(), 3).unwrap();
    let vt = trades(&vma.trace);
    let last_decision = rise.len() - 2;
    let (closing, signal): (Vec<&(usize, ActionKind, f64)>, Vec<_>) =
        vt.iter().partition(|t| t.0 == last_decision);
    assert!(!signal.is_empty());
    assert!(signal.iter().all(|t| t.1 == ActionKind::Buy));
    assert!(closing.iter().all(|t| t.1 == ActionKind::Sell));

    let mut reports: Vec<StrategyTrace> = vec![cross, vma];
    for seed in 0..5 {
        let d = market(price_path(300, 70 + seed, 0.04));
        let o = OraclePredictor {
            closes: d.closes.clone(),
        };
        for kind in StrategyKind::ALL {
            let p: Option<&dyn PricePredictor> = kind.needs_predictor().then_some(&o as _);
            reports.push(run_strategy(kind, &d, p, &params, &cfg, seed).unwrap());
        }
    }
    for s in &reports {
        let replay = replayed_profit(&s.trace);
        assert!(
            (s.profit_rate - replay).abs() <= 1e-9,
            "{:?}: {} vs {replay}",
            s.kind,
            s.profit_rate
        );
    }
    within(start, secs(30), "strategy fixtures");
}

// ---------------------------------------------------------------- end to end

fn write_candles(path: &Path) {
    let mut rng = seeding::rng(2024);
    let mut p = 8_000.0f64;
    let mut s = String::from("timestamp,open,high,low,close,volume\n");
    for i in 0..900 {
        let open = p;
        p *= 1.0 + 0.003 * (i as f64 / 17.0).sin() + rng.random_range(-0.004..0.004);
        let (hi, lo) = (open.max(p) * 1.001, open.min(p) * 0.999);
        s.push_str(&format!(
            "{},{open:.2},{hi:.2},{lo:.2},{p:.2},{:.4}\n",
            1_577_836_800 + 60 * i,
            rng.random_range(0.1..5.0)
        ));
    }
    fs::write(path, s).unwrap();
}

fn cli(out: &Path, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_ppo-trader"))
        .arg("--out")
        .arg(out)
        .args(["--seed", "17"])
        .args(args)
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&status.stderr)
    );
}

fn pipeline(root: &Path, candles: &Path) -> PathBuf {
    let input = candles.to_str().unwrap();
    cli(root, &["ingest", "--input", input]);
    cli(root, &["train-agent", "--smoke"]);
    cli(root, &["backtest"]);
    let runs: Vec<PathBuf> = fs::read_dir(root.join("runs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(runs.len(), 1);
    runs.into_iter().next().unwrap()
}

fn outputs(run: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(run)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            let name = p.file_name().unwrap().to_string_lossy();
            name == "comparison.csv" || name.ends_with(".svg")
        })
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn end_to_end_determinism() {
    let _g = serial();
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let candles = tmp.path().join("candles.csv");
    write_candles(&candles);
    let a = outputs(&pipeline(&tmp.path().join("a"), &candles));
    let b = outputs(&pipeline(&tmp.path().join("b"), &candles));
    assert!(a.iter().any(|(n, _)| n == "comparison.csv"));
    assert_eq!(a.iter().filter(|(n, _)| n.ends_with(".svg")).count(), 7);
    assert_eq!(a.len(), b.len());
    for ((na, da), (nb, db)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert!(da == db, "{na} differs between runs");
    }
    within(start, secs(300), "end to end");
}

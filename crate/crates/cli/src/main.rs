//! `ppo-trader`: ingest, train, backtest and report from one binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use ppo_trader_core::config::{parse_override, RunConfig};
use ppo_trader_core::data::{
    load_candles, make_windows, prepare, MarketData, PreparedData, Window,
};
use ppo_trader_core::env::{read_trace, write_trace, EpisodeTrace, TradingEnv};
use ppo_trader_core::nn::{
    baseline_forecasters, grid_search, history_csv, train_forecaster, Forecaster, GridSpace,
    LinearModel, TrainSchedule,
};
use ppo_trader_core::ppo::{
    action_probability, evaluate_agent, train_agent, training_log_csv, BanditEnv, PolicyNet,
    PpoConfig,
};
use ppo_trader_core::report::{summarize_run, RunInputs};
use ppo_trader_core::seeding::derive;
use ppo_trader_core::strategies::{
    run_strategy, ForecastChain, LinearWindowModel, PricePredictor, StrategyKind,
};

const AGENT_LABEL: &str = "Proposed Framework";
const AGENT_SLUG: &str = "agent";

#[derive(Parser, Debug)]
#[command(
    name = "ppo-trader",
    version,
    about = "PPO bitcoin trading research pipeline"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Plain-text `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Config override, `key=value`; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load candles, difference, check stationarity, normalize and split.
    Ingest {
        /// Candle CSV; defaults to `data_path` from the config.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train the LSTM forecaster on the ingested splits.
    TrainForecaster {
        /// Grid-search batch size, hidden units and dropout first.
        #[arg(long)]
        grid: bool,
        #[arg(long, value_delimiter = ',')]
        grid_batch: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        grid_hidden: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        grid_dropout: Option<Vec<f64>>,
        /// Epoch budget per grid combination.
        #[arg(long, default_value_t = 60)]
        grid_epochs: usize,
    },
    /// Train the PPO agent on the training split.
    TrainAgent {
        /// Quick run: bandit sanity check plus a tiny training budget.
        #[arg(long)]
        smoke: bool,
    },
    /// Evaluate the agent and benchmarks on the test split.
    Backtest {
        /// Comma-separated: agent, buy_and_hold, golden_cross, vma, momentum,
        /// non_named_i, non_named_ii, or all.
        #[arg(long)]
        strategies: Option<String>,
        /// Run directory name under `<out>/runs`; defaults to a timestamp.
        #[arg(long)]
        run_name: Option<String>,
    },
    /// Rebuild the report of an existing run directory from its traces.
    Report {
        /// Run directory; defaults to the newest one under `<out>/runs`.
        #[arg(long)]
        run: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::TrainForecaster { .. } => "train-forecaster",
            Command::TrainAgent { .. } => "train-agent",
            Command::Backtest { .. } => "backtest",
            Command::Report { .. } => "report",
        }
    }
}

fn resolve_config(g: &Global) -> Result<RunConfig> {
    let mut overrides = g
        .overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(seed) = g.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(out) = &g.out {
        overrides.push(("out_dir".into(), out.display().to_string()));
    }
    if let Some(jobs) = g.jobs {
        overrides.push(("jobs".into(), jobs.to_string()));
    }
    Ok(RunConfig::resolve(g.config.as_deref(), &overrides)?)
}

struct Layout {
    out: PathBuf,
}

impl Layout {
    fn data(&self) -> PathBuf {
        self.out.join("data")
    }
    fn forecaster(&self) -> PathBuf {
        self.out.join("forecaster")
    }
    fn agent(&self) -> PathBuf {
        self.out.join("agent")
    }
    fn runs(&self) -> PathBuf {
        self.out.join("runs")
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render_error(&e));
            ExitCode::FAILURE
        }
    }
}

/// Joins the error chain, skipping causes already spelled out by their parent.
fn render_error(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut prev = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if prev.ends_with(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
        prev = msg;
    }
    out
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli.global)?;
    if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let layout = Layout {
        out: PathBuf::from(&cfg.out_dir),
    };
    write(
        &layout
            .out
            .join(format!("{}.config.txt", cli.command.name())),
        cfg.to_text(),
    )?;
    match cli.command {
        Command::Ingest { input } => ingest(&cfg, &layout, input),
        Command::TrainForecaster {
            grid,
            grid_batch,
            grid_hidden,
            grid_dropout,
            grid_epochs,
        } => {
            let mut space = GridSpace::default();
            if let Some(v) = grid_batch {
                space.batch_sizes = v;
            }
            if let Some(v) = grid_hidden {
                space.hidden_units = v;
            }
            if let Some(v) = grid_dropout {
                space.dropouts = v;
            }
            train_forecaster_cmd(&cfg, &layout, grid.then_some((space, grid_epochs)))
        }
        Command::TrainAgent { smoke } => train_agent_cmd(&cfg, &layout, smoke),
        Command::Backtest {
            strategies,
            run_name,
        } => backtest(&cfg, &layout, strategies, run_name),
        Command::Report { run } => report(&cfg, &layout, run),
    }
}

fn ingest(cfg: &RunConfig, layout: &Layout, input: Option<PathBuf>) -> Result<()> {
    let path = input.unwrap_or_else(|| PathBuf::from(&cfg.data_path));
    let loaded = load_candles(&path)?;
    println!(
        "loaded {} candles from {} ({} rows dropped)",
        loaded.series.len(),
        path.display(),
        loaded.dropped
    );
    let prepared = prepare(&loaded.series, &cfg.preprocess)
        .with_context(|| format!("preprocessing {}", path.display()))?;
    match &prepared.adf {
        Some(a) => println!(
            "ADF on differenced closes: t = {:.4}, 5% critical = {:.4}, nobs = {} -> {}",
            a.t_statistic,
            a.critical_value_5pct,
            a.nobs,
            if a.reject_unit_root {
                "stationary (unit root rejected)"
            } else {
                "unit root NOT rejected"
            }
        ),
        None => println!("ADF test could not be run"),
    }
    for w in &prepared.warnings {
        eprintln!("warning: {w}");
    }
    prepared.save(&layout.data())?;
    println!(
        "train/valid/test: {}/{}/{} candles -> {}",
        prepared.train.len(),
        prepared.valid.len(),
        prepared.test.len(),
        layout.data().display()
    );
    Ok(())
}

fn load_prepared(layout: &Layout) -> Result<PreparedData> {
    PreparedData::load(&layout.data()).with_context(|| {
        format!(
            "no ingested data in {} (run `ingest` first)",
            layout.data().display()
        )
    })
}

fn windows(data: &MarketData, window: usize) -> Result<Vec<Window>> {
    make_windows(&data.features, window)
        .with_context(|| format!("building windows of {window} from {} values", data.len()))
}

fn train_forecaster_cmd(
    cfg: &RunConfig,
    layout: &Layout,
    grid: Option<(GridSpace, usize)>,
) -> Result<()> {
    let data = load_prepared(layout)?;
    let w = cfg.forecaster.window;
    let (train, valid, test) = (
        windows(&data.train, w)?,
        windows(&data.valid, w)?,
        windows(&data.test, w)?,
    );
    let seed = derive(cfg.seed, "forecaster");
    let mut model_cfg = cfg.forecaster;
    let mut schedule = cfg.schedule;
    let dir = layout.forecaster();
    if let Some((space, epochs)) = grid {
        let grid_schedule = TrainSchedule {
            max_epochs: epochs.min(schedule.max_epochs),
            ..schedule
        };
        let g = grid_search(&model_cfg, &space, &grid_schedule, &train, &valid, seed)?;
        let mut csv = String::from("batch_size,hidden,dropout,best_valid_mse\n");
        for (p, s) in &g.scores {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                p.batch_size, p.hidden, p.dropout, s
            ));
        }
        write(&dir.join("grid.csv"), csv)?;
        println!(
            "grid best: batch {} hidden {} dropout {} (valid MSE {:.6e})",
            g.best.batch_size, g.best.hidden, g.best.dropout, g.best_valid_mse
        );
        model_cfg.hidden = g.best.hidden;
        model_cfg.dropout = g.best.dropout;
        schedule.batch_size = g.best.batch_size;
    }
    let outcome = train_forecaster(&model_cfg, &train, &valid, &schedule, seed)?;
    outcome.model.save(&dir, "lstm")?;
    write(&dir.join("history.csv"), history_csv(&outcome.history))?;
    let test_mse = outcome.model.evaluate_mse(&test)?;
    let base = baseline_forecasters(&train, &test)?;
    let summary = format!(
        "best_epoch = {}\nbest_valid_mse = {}\ntest_mse = {}\npersistence_test_mse = {}\nlinear_test_mse = {}\n",
        outcome.best_epoch, outcome.best_valid_mse, test_mse, base.persistence_mse, base.linear_mse
    );
    write(&dir.join("summary.txt"), &summary)?;
    println!(
        "best valid MSE {:.6e} at epoch {}; test MSE {:.6e} (persistence {:.6e}, linear {:.6e})",
        outcome.best_valid_mse, outcome.best_epoch, test_mse, base.persistence_mse, base.linear_mse
    );
    Ok(())
}

fn train_agent_cmd(cfg: &RunConfig, layout: &Layout, smoke: bool) -> Result<()> {
    let data = load_prepared(layout)?;
    let mut ppo = cfg.ppo;
    if smoke {
        let bandit_cfg = PpoConfig {
            horizon: 128,
            minibatch_size: 32,
            learning_rate: 3e-3,
            total_iterations: 50,
            ..ppo
        };
        let mut bandit = BanditEnv::new(24, 16);
        let out = train_agent(&mut bandit, &bandit_cfg, derive(cfg.seed, "smoke-bandit"))?;
        let p = action_probability(&out.policy, &mut bandit, 0)?;
        println!("smoke: bandit policy puts {p:.4} on the rewarding action");
        if p <= 0.9 {
            bail!("smoke check failed: bandit probability {p:.4} <= 0.9");
        }
        ppo.total_iterations = ppo.total_iterations.min(2);
        ppo.horizon = ppo.horizon.min(64);
        ppo.minibatch_size = ppo.minibatch_size.min(32);
    }
    let mut env = TradingEnv::new(cfg.env, data.train.clone(), derive(cfg.seed, "env"))?;
    let out = train_agent(&mut env, &ppo, derive(cfg.seed, "agent"))?;
    let dir = layout.agent();
    write(&dir.join("training_log.csv"), training_log_csv(&out.log))?;
    if let Some(why) = &out.diverged {
        out.policy.save(&dir, "agent_last_good")?;
        bail!(
            "training diverged ({why}); last good checkpoint: {}",
            dir.join("agent_last_good.nnc").display()
        );
    }
    out.policy.save(&dir, "agent")?;
    if let Some(last) = out.log.last() {
        println!(
            "trained {} iterations; last mean reward {:.4}, entropy {:.4}, KL {:.2e}",
            out.log.len(),
            last.mean_reward,
            last.entropy,
            last.approx_kl
        );
    }
    println!("agent checkpoint: {}", dir.join("agent.nnc").display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Runner {
    Agent,
    Rule(StrategyKind),
}

fn parse_selection(s: &str) -> Result<Vec<Runner>> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item {
            "all" => {
                out.push(Runner::Agent);
                out.extend(StrategyKind::ALL.into_iter().map(Runner::Rule));
            }
            AGENT_SLUG => out.push(Runner::Agent),
            other => out.push(Runner::Rule(
                StrategyKind::from_slug(other)
                    .with_context(|| format!("unknown strategy {other:?}"))?,
            )),
        }
    }
    out.dedup();
    let mut seen = Vec::new();
    out.retain(|r| {
        let new = !seen.contains(r);
        seen.push(*r);
        new
    });
    if out.is_empty() {
        bail!("no strategies selected");
    }
    Ok(out)
}

fn unique_dir(base: PathBuf) -> PathBuf {
    if !base.exists() {
        return base;
    }
    (1..)
        .map(|i| PathBuf::from(format!("{}-{i}", base.display())))
        .find(|p| !p.exists())
        .expect("unbounded search")
}

fn backtest(
    cfg: &RunConfig,
    layout: &Layout,
    strategies: Option<String>,
    run_name: Option<String>,
) -> Result<()> {
    let selection = parse_selection(strategies.as_deref().unwrap_or(&cfg.backtest_strategies))?;
    let data = load_prepared(layout)?;
    let test = &data.test;
    let env_seed = derive(cfg.seed, "backtest-env");
    let mut notes = Vec::new();

    let policy = if selection.contains(&Runner::Agent) {
        Some(PolicyNet::load(&layout.agent(), "agent").with_context(|| {
            format!(
                "no agent checkpoint in {} (run `train-agent` first)",
                layout.agent().display()
            )
        })?)
    } else {
        None
    };

    let needs_predictor = selection
        .iter()
        .any(|r| matches!(r, Runner::Rule(k) if k.needs_predictor()));
    let predictor: Option<Box<dyn PricePredictor + Sync>> = if needs_predictor {
        let dir = layout.forecaster();
        if dir.join("lstm.nnc").exists() {
            let model = Forecaster::load(&dir, "lstm")?;
            Some(Box::new(ForecastChain::new(model, data.normalization)?))
        } else {
            let train = windows(&data.train, cfg.forecaster.window)?;
            let model = LinearModel::fit(&train)?;
            notes.push(
                "no trained forecaster found; forecast-driven strategies used the least-squares baseline"
                    .to_string(),
            );
            Some(Box::new(ForecastChain::new(
                LinearWindowModel { model },
                data.normalization,
            )?))
        }
    } else {
        None
    };

    let results: Vec<(String, String, EpisodeTrace, f64)> = selection
        .par_iter()
        .map(|r| -> Result<_> {
            match r {
                Runner::Agent => {
                    let mut env = TradingEnv::new(cfg.env, test.clone(), env_seed)?;
                    let eval =
                        evaluate_agent(policy.as_ref().expect("loaded"), &mut env, env_seed)?;
                    Ok((
                        AGENT_SLUG.to_string(),
                        AGENT_LABEL.to_string(),
                        eval.trace,
                        eval.profit_rate,
                    ))
                }
                Runner::Rule(kind) => {
                    let p = predictor.as_deref().map(|p| p as &dyn PricePredictor);
                    let s = run_strategy(*kind, test, p, &cfg.strategy, &cfg.env, env_seed)?;
                    Ok((
                        kind.slug().to_string(),
                        kind.label().to_string(),
                        s.trace,
                        s.profit_rate,
                    ))
                }
            }
        })
        .collect::<Result<_>>()?;

    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    let name = run_name.unwrap_or_else(|| format!("{stamp}-seed{}", cfg.seed));
    let run_dir = unique_dir(layout.runs().join(name));
    fs::create_dir_all(&run_dir).with_context(|| format!("creating {}", run_dir.display()))?;
    write(&run_dir.join("config.txt"), cfg.to_text())?;
    write(&run_dir.join("notes.txt"), notes.join("\n"))?;

    let mut traces = Vec::new();
    for (slug, label, trace, rate) in results {
        let stem = format!("{slug}_{}", cfg.seed);
        write_trace(&trace, &run_dir.join(format!("{stem}.csv")))?;
        println!("{label:<36} {rate:>10.2} %");
        traces.push((stem, label, trace));
    }
    let summary = finish_report(cfg, layout, &run_dir, traces, notes)?;
    println!(
        "run directory: {} ({} plots)",
        run_dir.display(),
        summary.plots.len()
    );
    Ok(())
}

fn finish_report(
    cfg: &RunConfig,
    layout: &Layout,
    run_dir: &Path,
    traces: Vec<(String, String, EpisodeTrace)>,
    notes: Vec<String>,
) -> Result<ppo_trader_core::report::RunSummary> {
    let log = fs::read_to_string(layout.agent().join("training_log.csv")).ok();
    let config_echo = fs::read_to_string(run_dir.join("config.txt")).ok();
    let inputs = RunInputs {
        traces,
        training_log: log.as_deref(),
        config_echo: config_echo.as_deref(),
        seed: cfg.seed,
        notes,
    };
    let summary = summarize_run(run_dir, &inputs)?;
    for m in &summary.missing {
        eprintln!("warning: report is missing the {m}");
    }
    Ok(summary)
}

fn label_for(slug: &str) -> Option<&'static str> {
    if slug == AGENT_SLUG {
        Some(AGENT_LABEL)
    } else {
        StrategyKind::from_slug(slug).map(|k| k.label())
    }
}

fn report(cfg: &RunConfig, layout: &Layout, run: Option<PathBuf>) -> Result<()> {
    let run_dir = match run {
        Some(r) => r,
        None => {
            let mut dirs: Vec<PathBuf> = fs::read_dir(layout.runs())
                .with_context(|| format!("listing {}", layout.runs().display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_dir())
                .collect();
            dirs.sort();
            dirs.pop().context("no run directories found")?
        }
    };
    let mut entries: Vec<PathBuf> = fs::read_dir(&run_dir)
        .with_context(|| format!("listing {}", run_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    entries.sort();
    let mut traces = Vec::new();
    for path in entries {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let Some((slug, _seed)) = stem.rsplit_once('_') else {
            continue;
        };
        let Some(label) = label_for(slug) else {
            continue;
        };
        let trace = read_trace(&path)?;
        traces.push((stem.clone(), label.to_string(), trace));
    }
    if traces.is_empty() {
        bail!("no strategy traces in {}", run_dir.display());
    }
    let notes = fs::read_to_string(run_dir.join("notes.txt"))
        .map(|s| {
            s.lines()
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect()
        })
        .unwrap_or_default();
    let summary = finish_report(cfg, layout, &run_dir, traces, notes)?;
    print!("{}", summary.table.to_text());
    println!("report: {}", run_dir.join("report.txt").display());
    Ok(())
}

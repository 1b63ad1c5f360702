//! Stacked-LSTM one-step-ahead forecaster and its training loop.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use super::schedule::{PlateauDecision, PlateauTracker, TrainSchedule};
use super::{
    adam_step, checkpoint, dropout, Activation, AdamState, DenseParams, LstmStack, Matrix, Mode,
    Parameterized,
};
use crate::config::parse_key_values;
use crate::data::Window;
use crate::seeding;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecasterConfig {
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f64,
    /// Input window length.
    pub window: usize,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            hidden: 50,
            dropout: 0.2,
            window: 10,
        }
    }
}

impl ForecasterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.window == 0 {
            return Err(Error::invalid(format!("degenerate forecaster {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {}", self.dropout)));
        }
        Ok(())
    }
}

/// Scalar inputs through the LSTM stack; the last step's top output feeds a
/// linear dense head.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecaster {
    pub config: ForecasterConfig,
    pub stack: LstmStack,
    pub head: DenseParams,
}

struct WindowCache {
    stack: super::StackCache,
    head: super::DenseCache,
    top_mask: Vec<f64>,
}

impl Forecaster {
    pub fn new(config: ForecasterConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeding::rng(seed);
        let stack = LstmStack::init(1, config.hidden, config.layers, &mut rng);
        let head = DenseParams::init(config.hidden, 1, Activation::Linear, &mut rng);
        Ok(Self {
            config,
            stack,
            head,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config,
            stack: self.stack.zeros_like(),
            head: self.head.zeros_like(),
        }
    }

    fn run(
        &self,
        window: &[f64],
        rng: Option<&mut dyn rand::RngCore>,
    ) -> Result<(f64, WindowCache)> {
        if window.len() != self.config.window {
            return Err(Error::Shape(format!(
                "forecaster expects windows of {}, got {}",
                self.config.window,
                window.len()
            )));
        }
        let inputs: Vec<Vec<f64>> = window.iter().map(|v| vec![*v]).collect();
        let init = self.stack.zero_state();
        let (top, cache, top_mask) = match rng {
            Some(rng) => {
                let (outs, _, cache) = self.stack.forward_sequence(
                    &inputs,
                    &init,
                    &[],
                    Some((self.config.dropout, &mut *rng)),
                )?;
                let last = outs.last().expect("non-empty window");
                let (dropped, mask) = dropout(last, self.config.dropout, Mode::Train, rng)?;
                (dropped, cache, mask)
            }
            None => {
                let (mut outs, _, cache) =
                    self.stack.forward_sequence(&inputs, &init, &[], None)?;
                let last = outs.pop().expect("non-empty window");
                let mask = vec![1.0; last.len()];
                (last, cache, mask)
            }
        };
        let (y, head) = self.head.forward(&top)?;
        Ok((
            y[0],
            WindowCache {
                stack: cache,
                head,
                top_mask,
            },
        ))
    }

    /// Evaluation-mode prediction for one window.
    pub fn predict(&self, window: &[f64]) -> Result<f64> {
        self.run(window, None).map(|(y, _)| y)
    }

    pub fn evaluate_mse(&self, windows: &[Window]) -> Result<f64> {
        if windows.is_empty() {
            return Err(Error::TooShort { needed: 1, got: 0 });
        }
        let mut sum = 0.0;
        for w in windows {
            let e = self.predict(&w.input)? - w.target;
            sum += e * e;
        }
        Ok(sum / windows.len() as f64)
    }

    /// Mean squared error over `batch` and its gradient (accumulated into `grads`).
    pub fn batch_gradient(
        &self,
        batch: &[&Window],
        grads: &mut Forecaster,
        rng: Option<&mut dyn rand::RngCore>,
    ) -> Result<f64> {
        let n = batch.len() as f64;
        let mut loss = 0.0;
        let mut rng = rng;
        for w in batch {
            let r: Option<&mut dyn rand::RngCore> = match rng {
                Some(ref mut r) => Some(&mut **r),
                None => None,
            };
            let (pred, cache) = self.run(&w.input, r)?;
            let err = pred - w.target;
            loss += err * err / n;
            let d_head = [2.0 * err / n];
            let d_top = self
                .head
                .backward_preactivation(&d_head, &cache.head, &mut grads.head);
            let mut d_seq = vec![vec![0.0; self.config.hidden]; self.config.window];
            *d_seq.last_mut().unwrap() = d_top
                .iter()
                .zip(&cache.top_mask)
                .map(|(d, m)| d * m)
                .collect();
            self.stack
                .backward_sequence(&d_seq, &cache.stack, &mut grads.stack)?;
        }
        Ok(loss)
    }

    /// Writes `<dir>/<name>.nnc` and `<dir>/<name>.txt` (architecture echo).
    pub fn save(&self, dir: &Path, name: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        checkpoint::save(self, &dir.join(format!("{name}.nnc")))?;
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "kind = lstm_forecaster");
        let _ = writeln!(s, "layers = {}", c.layers);
        let _ = writeln!(s, "hidden = {}", c.hidden);
        let _ = writeln!(s, "dropout = {}", c.dropout);
        let _ = writeln!(s, "window = {}", c.window);
        let path = dir.join(format!("{name}.txt"));
        fs::write(&path, s).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path, name: &str) -> Result<Self> {
        let path = dir.join(format!("{name}.txt"));
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let kv = parse_key_values(&text)?;
        let get = |k: &str| -> Result<&String> {
            kv.get(k)
                .ok_or_else(|| Error::Checkpoint(format!("{} missing {k}", path.display())))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad {k}")))
        };
        let config = ForecasterConfig {
            layers: num("layers")?,
            hidden: num("hidden")?,
            window: num("window")?,
            dropout: get("dropout")?
                .parse()
                .map_err(|_| Error::Checkpoint("bad dropout".into()))?,
        };
        let mut model = Forecaster::new(config, 0)?;
        checkpoint::load_into(&mut model, &dir.join(format!("{name}.nnc")))?;
        Ok(model)
    }
}

impl Parameterized for Forecaster {
    fn tensors(&self) -> Vec<&Matrix> {
        let mut t = self.stack.tensors();
        t.extend(self.head.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut t = self.stack.tensors_mut();
        t.extend(self.head.tensors_mut());
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub valid_mse: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation MSE.
    pub model: Forecaster,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_valid_mse: f64,
}

/// Renders the per-epoch history as `epoch,train_mse,valid_mse,lr` CSV.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_mse,valid_mse,lr\n");
    for r in history {
        let _ = writeln!(s, "{},{},{},{}", r.epoch, r.train_mse, r.valid_mse, r.lr);
    }
    s
}

/// Mini-batch Adam on MSE with plateau decay and early stopping.
///
/// Windows are reshuffled every epoch from `seed`; the returned model is the
/// snapshot with the best validation MSE.
pub fn train_forecaster(
    config: &ForecasterConfig,
    train: &[Window],
    valid: &[Window],
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<TrainOutcome> {
    schedule.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::invalid(
            "training and validation windows must be non-empty",
        ));
    }
    let mut model = Forecaster::new(*config, seeding::derive(seed, "init"))?;
    let mut adam = AdamState::new(&model);
    let mut tracker = PlateauTracker::new(*schedule);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best = (model.clone(), 0usize, f64::INFINITY);
    let shuffle_seed = seeding::derive(seed, "shuffle");
    let dropout_seed = seeding::derive(seed, "dropout");

    for epoch in 1..=schedule.max_epochs {
        let lr = tracker.lr();
        let mut shuffle_rng = seeding::rng(seeding::derive_indexed(shuffle_seed, &[epoch as u64]));
        order.shuffle(&mut shuffle_rng);
        let mut drop_rng = seeding::rng(seeding::derive_indexed(dropout_seed, &[epoch as u64]));

        let mut train_loss = 0.0;
        for chunk in order.chunks(schedule.batch_size) {
            let batch: Vec<&Window> = chunk.iter().map(|&i| &train[i]).collect();
            let mut grads = model.zeros_like();
            let loss = model.batch_gradient(&batch, &mut grads, Some(&mut drop_rng))?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("batch loss {loss}"),
                });
            }
            train_loss += loss * batch.len() as f64;
            adam_step(&mut model, &grads, &mut adam, lr).map_err(|e| Error::Diverged {
                epoch,
                detail: e.to_string(),
            })?;
        }
        let train_mse = train_loss / train.len() as f64;
        let valid_mse = model.evaluate_mse(valid)?;
        if !valid_mse.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("validation mse {valid_mse}"),
            });
        }
        history.push(EpochRecord {
            epoch,
            train_mse,
            valid_mse,
            lr,
        });
        let decision = tracker.observe(valid_mse);
        if decision == PlateauDecision::Improved {
            best = (model.clone(), epoch, valid_mse);
        }
        if decision == PlateauDecision::Stop {
            break;
        }
    }

    let (model, best_epoch, best_valid_mse) = best;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_valid_mse,
    })
}

/// Reads a history CSV back into records.
pub fn parse_history_csv(text: &str) -> Result<Vec<EpochRecord>> {
    let mut out = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Parse(format!("history row {line:?}"));
        if f.len() != 4 {
            return Err(bad());
        }
        out.push(EpochRecord {
            epoch: f[0].parse().map_err(|_| bad())?,
            train_mse: f[1].parse().map_err(|_| bad())?,
            valid_mse: f[2].parse().map_err(|_| bad())?,
            lr: f[3].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

/// Named scalar summary used by reports.
pub fn summarize_outcome(o: &TrainOutcome) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("best_epoch".into(), o.best_epoch.to_string());
    m.insert("best_valid_mse".into(), o.best_valid_mse.to_string());
    m.insert("epochs_run".into(), o.history.len().to_string());
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_windows;
    use crate::nn::gradcheck::{check_gradients, GradCheck};

    fn sine(n: usize, period: f64) -> Vec<f64> {
        (0..n)
            .map(|i| 0.5 + 0.4 * (2.0 * std::f64::consts::PI * i as f64 / period).sin())
            .collect()
    }

    #[test]
    fn forecaster_loss_gradient_matches_finite_differences() {
        let cfg = ForecasterConfig {
            layers: 2,
            hidden: 3,
            dropout: 0.0,
            window: 4,
        };
        let model = Forecaster::new(cfg, 3).unwrap();
        let windows = make_windows(&sine(12, 7.0), 4).unwrap();
        let batch: Vec<&Window> = windows.iter().take(5).collect();
        let mut grads = model.zeros_like();
        model.batch_gradient(&batch, &mut grads, None).unwrap();
        let loss = |m: &Forecaster| {
            let mut g = m.zeros_like();
            m.batch_gradient(&batch, &mut g, None).unwrap()
        };
        let r = check_gradients(&model, &grads, loss, GradCheck::default());
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn dropout_gradient_matches_with_fixed_masks() {
        let cfg = ForecasterConfig {
            layers: 2,
            hidden: 3,
            dropout: 0.3,
            window: 3,
        };
        let model = Forecaster::new(cfg, 8).unwrap();
        let windows = make_windows(&sine(8, 5.0), 3).unwrap();
        let batch: Vec<&Window> = windows.iter().collect();
        let loss_with = |m: &Forecaster, g: &mut Forecaster| {
            let mut rng = seeding::rng(99);
            m.batch_gradient(&batch, g, Some(&mut rng)).unwrap()
        };
        let mut grads = model.zeros_like();
        loss_with(&model, &mut grads);
        let r = check_gradients(
            &model,
            &grads,
            |m| loss_with(m, &mut m.zeros_like()),
            GradCheck::default(),
        );
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn training_is_reproducible_and_restores_best_epoch() {
        let values = sine(120, 16.0);
        let w = make_windows(&values, 5).unwrap();
        let (train, valid) = w.split_at(90);
        let cfg = ForecasterConfig {
            layers: 1,
            hidden: 6,
            dropout: 0.1,
            window: 5,
        };
        let schedule = TrainSchedule {
            max_epochs: 8,
            batch_size: 16,
            initial_lr: 0.01,
            ..TrainSchedule::default()
        };
        let a = train_forecaster(&cfg, train, valid, &schedule, 4).unwrap();
        let b = train_forecaster(&cfg, train, valid, &schedule, 4).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.model, b.model);
        let min = a
            .history
            .iter()
            .map(|r| r.valid_mse)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(a.best_valid_mse, min);
        assert_eq!(a.model.evaluate_mse(valid).unwrap(), min);
        let parsed = parse_history_csv(&history_csv(&a.history)).unwrap();
        assert_eq!(parsed, a.history);
    }

    #[test]
    fn save_and_load() {
        let model = Forecaster::new(
            ForecasterConfig {
                layers: 2,
                hidden: 4,
                dropout: 0.2,
                window: 3,
            },
            1,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path(), "model").unwrap();
        assert_eq!(Forecaster::load(dir.path(), "model").unwrap(), model);
    }

    #[test]
    fn rejects_wrong_window() {
        let model = Forecaster::new(ForecasterConfig::default(), 1).unwrap();
        assert!(model.predict(&[0.0; 3]).is_err());
    }
}

use crate::{Error, Result};

/// Optimizer schedule with plateau learning-rate decay and early stopping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSchedule {
    pub initial_lr: f64,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before the learning rate is cut.
    pub lr_patience: usize,
    pub lr_factor: f64,
    /// Epochs without a validation improvement before training stops.
    pub stop_patience: usize,
    pub batch_size: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            initial_lr: 0.001,
            max_epochs: 300,
            lr_patience: 5,
            lr_factor: 0.2,
            stop_patience: 10,
            batch_size: 32,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return Err(Error::invalid(format!(
                "lr_factor {} not in (0, 1)",
                self.lr_factor
            )));
        }
        if self.lr_patience >= self.stop_patience {
            return Err(Error::invalid("lr_patience must be below stop_patience"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("batch_size and max_epochs must be positive"));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate {}", self.initial_lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlateauDecision {
    Improved,
    Continue,
    ReduceLr,
    Stop,
}

/// Tracks the best validation loss and decides what happens after each epoch.
#[derive(Debug, Clone)]
pub struct PlateauTracker {
    schedule: TrainSchedule,
    best: f64,
    since_best: usize,
    lr: f64,
}

impl PlateauTracker {
    pub fn new(schedule: TrainSchedule) -> Self {
        Self {
            schedule,
            best: f64::INFINITY,
            since_best: 0,
            lr: schedule.initial_lr,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Records one epoch's validation loss. A cut takes effect from the next epoch.
    pub fn observe(&mut self, valid_loss: f64) -> PlateauDecision {
        if valid_loss < self.best {
            self.best = valid_loss;
            self.since_best = 0;
            return PlateauDecision::Improved;
        }
        self.since_best += 1;
        if self.since_best >= self.schedule.stop_patience {
            PlateauDecision::Stop
        } else if self.since_best.is_multiple_of(self.schedule.lr_patience) {
            self.lr *= self.schedule.lr_factor;
            PlateauDecision::ReduceLr
        } else {
            PlateauDecision::Continue
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Replays a validation curve; returns (epochs run, epochs at which lr was cut).
    fn replay(curve: impl Fn(usize) -> f64, s: TrainSchedule) -> (usize, Vec<usize>) {
        let mut t = PlateauTracker::new(s);
        let mut cuts = Vec::new();
        for epoch in 1..=s.max_epochs {
            match t.observe(curve(epoch)) {
                PlateauDecision::Stop => return (epoch, cuts),
                PlateauDecision::ReduceLr => cuts.push(epoch),
                _ => {}
            }
        }
        (s.max_epochs, cuts)
    }

    #[test]
    fn strictly_improving_runs_every_epoch() {
        let (epochs, cuts) = replay(|e| 1.0 / e as f64, TrainSchedule::default());
        assert_eq!(epochs, 300);
        assert!(cuts.is_empty());
    }

    #[test]
    fn constant_loss_cuts_at_six_and_stops_at_eleven() {
        let (epochs, cuts) = replay(|_| 0.5, TrainSchedule::default());
        assert_eq!(cuts, vec![6]);
        assert_eq!(epochs, 11);
    }

    #[test]
    fn lr_is_cut_by_factor() {
        let mut t = PlateauTracker::new(TrainSchedule::default());
        for _ in 0..6 {
            t.observe(1.0);
        }
        assert!((t.lr() - 0.0002).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        let mut s = TrainSchedule::default();
        assert!(s.validate().is_ok());
        s.lr_factor = 1.0;
        assert!(s.validate().is_err());
        let s = TrainSchedule {
            lr_patience: 10,
            ..TrainSchedule::default()
        };
        assert!(s.validate().is_err());
    }
}

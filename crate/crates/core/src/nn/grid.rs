//! Exhaustive hyper-parameter grid over batch size, hidden width and dropout.

use rayon::prelude::*;

use super::forecaster::{train_forecaster, ForecasterConfig};
use super::schedule::TrainSchedule;
use crate::data::Window;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpace {
    pub batch_sizes: Vec<usize>,
    pub hidden_units: Vec<usize>,
    pub dropouts: Vec<f64>,
}

impl Default for GridSpace {
    fn default() -> Self {
        Self {
            batch_sizes: vec![256, 128, 64, 32, 16],
            hidden_units: vec![200, 100, 50, 25],
            dropouts: vec![0.5, 0.4, 0.3, 0.2, 0.1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub batch_size: usize,
    pub hidden: usize,
    pub dropout: f64,
}

impl GridSpace {
    /// Batch size outermost, dropout innermost.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &batch_size in &self.batch_sizes {
            for &hidden in &self.hidden_units {
                for &dropout in &self.dropouts {
                    out.push(GridPoint {
                        batch_size,
                        hidden,
                        dropout,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best: GridPoint,
    pub best_valid_mse: f64,
    /// Every combination in enumeration order with its best validation MSE.
    pub scores: Vec<(GridPoint, f64)>,
}

/// Trains every combination with the same seed and picks the lowest
/// validation MSE; ties go to the earliest combination. Combinations run in
/// parallel on the current rayon pool.
pub fn grid_search(
    base: &ForecasterConfig,
    space: &GridSpace,
    schedule: &TrainSchedule,
    train: &[Window],
    valid: &[Window],
    seed: u64,
) -> Result<GridResult> {
    let points = space.points();
    if points.is_empty() {
        return Err(Error::invalid("empty hyper-parameter space"));
    }
    let scores: Vec<(GridPoint, f64)> = points
        .par_iter()
        .map(|p| {
            let cfg = ForecasterConfig {
                hidden: p.hidden,
                dropout: p.dropout,
                ..*base
            };
            let sched = TrainSchedule {
                batch_size: p.batch_size,
                ..*schedule
            };
            train_forecaster(&cfg, train, valid, &sched, seed).map(|o| (*p, o.best_valid_mse))
        })
        .collect::<Result<_>>()?;

    let (best, best_valid_mse) = scores
        .iter()
        .fold(None::<(GridPoint, f64)>, |acc, &(p, s)| match acc {
            Some((_, b)) if b <= s => acc,
            _ => Some((p, s)),
        })
        .expect("non-empty");
    Ok(GridResult {
        best,
        best_valid_mse,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_windows;

    fn data() -> (Vec<Window>, Vec<Window>) {
        let v: Vec<f64> = (0..90)
            .map(|i| 0.5 + 0.4 * (i as f64 * 0.5).sin())
            .collect();
        let w = make_windows(&v, 4).unwrap();
        let (a, b) = w.split_at(70);
        (a.to_vec(), b.to_vec())
    }

    fn small() -> (ForecasterConfig, TrainSchedule) {
        (
            ForecasterConfig {
                layers: 1,
                hidden: 4,
                dropout: 0.0,
                window: 4,
            },
            TrainSchedule {
                max_epochs: 3,
                initial_lr: 0.01,
                ..TrainSchedule::default()
            },
        )
    }

    #[test]
    fn single_point_space() {
        let (train, valid) = data();
        let (cfg, sched) = small();
        let space = GridSpace {
            batch_sizes: vec![8],
            hidden_units: vec![3],
            dropouts: vec![0.1],
        };
        let r = grid_search(&cfg, &space, &sched, &train, &valid, 1).unwrap();
        assert_eq!(
            r.best,
            GridPoint {
                batch_size: 8,
                hidden: 3,
                dropout: 0.1
            }
        );
        assert_eq!(r.scores.len(), 1);
    }

    #[test]
    fn empty_space_is_an_error() {
        let (train, valid) = data();
        let (cfg, sched) = small();
        let space = GridSpace {
            batch_sizes: vec![],
            ..GridSpace::default()
        };
        assert!(grid_search(&cfg, &space, &sched, &train, &valid, 1).is_err());
    }

    #[test]
    fn enumeration_order_and_default_size() {
        let pts = GridSpace::default().points();
        assert_eq!(pts.len(), 100);
        assert_eq!(
            pts[0],
            GridPoint {
                batch_size: 256,
                hidden: 200,
                dropout: 0.5
            }
        );
        assert_eq!(pts[1].dropout, 0.4);
    }
}

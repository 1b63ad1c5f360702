//! Minimal dense + LSTM machinery with hand-derived gradients.

pub mod activation;
mod adam;
mod dense;
pub mod dropout;
pub mod gradcheck;
mod loss;
pub mod lstm;
mod matrix;
mod params;

pub use activation::{log_softmax, softmax, Activation};
pub use adam::{adam_step, AdamState};
pub use dense::{dense_forward, DenseCache, DenseParams};
pub use dropout::{dropout, Mode};
pub use loss::mse;
pub use lstm::{
    lstm_cell_backward, lstm_cell_forward, lstm_sequence_backward, LstmCache, LstmCellParams,
    LstmStack, LstmState, StackCache,
};
pub use matrix::Matrix;
pub use params::Parameterized;

mod baseline;
pub mod checkpoint;
mod forecaster;
mod grid;
mod schedule;

pub use baseline::{baseline_forecasters, BaselineScores, LinearModel};
pub use forecaster::{
    history_csv, parse_history_csv, summarize_outcome, train_forecaster, EpochRecord, Forecaster,
    ForecasterConfig, TrainOutcome,
};
pub use grid::{grid_search, GridPoint, GridResult, GridSpace};
pub use schedule::{PlateauDecision, PlateauTracker, TrainSchedule};

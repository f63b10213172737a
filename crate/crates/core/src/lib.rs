//! Regularized chess ratings.
//!
//! Each player gets a single rating, fitted by stochastic gradient descent to
//! recency-weighted game outcomes while being pulled towards the weighted
//! average rating of their opponents. The crate covers training, prediction,
//! evaluation, tuning of the two global parameters, conversion to the Elo
//! scale, synthetic data and a command-line front end.

pub mod cli;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod normalize;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use eval::{
    evaluate, grid_tune, pm_rmse, predict, rmse, spearman, time_split, EvalReport, Metric,
    TuneResult,
};
pub use model::{
    build_neighborhoods, neighbor_averages, predict_outcome, time_weight, Dataset, DatasetIndex,
    GameRecord, NeighborStats, Neighborhoods, Outcome, PlayerId, RatingTable, TimeWeights,
};
pub use trainer::{
    learning_rate, sgd_epoch, total_loss, train, EarlyOut, Hyperparams, TrainReport,
};

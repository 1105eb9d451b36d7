//! Experiment orchestration: configuration, optimizers, the adversarial
//! training loop, and the random-architecture stability benchmark.

pub mod bogonet;
pub mod config;
pub mod optim;
pub mod train;

pub use bogonet::{bogonet_run, canonical_algorithms, AlgorithmResult, AlgorithmSpec};
pub use config::{DatasetSelector, GameConfig, OptimizerConfig, UpdateMode};
pub use optim::{clip_params, Optimizer};
pub use train::{
    agd_train, agd_train_with, EvalEvent, Failure, TrainLog, TrainOutcome, TrainRow,
};

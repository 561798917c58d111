//! Run orchestration: configuration, training, evaluation, reporting,
//! checkpoints, visualization, and the finite-difference suite.

pub mod checkpoint;
pub mod config;
pub mod evaluate;
pub mod gradcheck;
pub mod report;
pub mod train;
pub mod viz;

pub use checkpoint::Checkpoint;
pub use config::{DataSource, TrainConfig};
pub use report::{Cell, RunReport};
pub use train::{StepLog, TrainOutput};

#[cfg(test)]
mod tests;

//! Desk-scale experiment harness.
//!
//! Synthetic Gaussian classes with injected label noise, a two-layer ReLU
//! network trained by plain SGD, and per-epoch logs of accuracy against the
//! noisy labels (ACC), against the clean labels, and on the corrupted subset.
//! The logs feed [`crate::dynamics::detect_el`] and the sweep tables.

mod data;
mod model;
mod sweep;
mod train;

pub use data::{class_means, generate_dataset, DatasetSpec, SyntheticDataset};
pub use model::{backward, forward, forward_batch, BatchActivations, Gradients, MlpModel, ModelSpec};
pub use sweep::{
    assemble, cells, el_reference, run_cell, sweep, CellMode, CellResult, CellSpec, ElBase, GridMode, SweepGrid, SweepRow,
    SweepTable,
};
pub use train::{
    train, train_with_observer, BatchEvent, ElSource, EpochRow, LossMode, NoObserver, OptimizerSpec, TrainConfig,
    TrainLog, TrainObserver,
};

use alloc::boxed::Box;
use thiserror::Error;

use crate::dld::LossError;
use crate::dynamics::DynamicsError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainerError {
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: u32, batch: usize, partial: Box<TrainLog> },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("early-learning endpoint was not detected on the reference run")]
    ElNotDetected,
}

//! Objectives, optimizer and the joint two-adapter training loop.

mod adam;
mod loss;
mod train;

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use loss::{loss_cross, loss_rec, loss_total, LossTerms, OutputGrads, PairGrads};
pub use train::{train, EpochRecord, PairedDataset, TrainConfig, TrainHistory, TrainedPair};

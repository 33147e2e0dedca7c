//! Synthetic data, deep-supervision loss, back-propagation and the training loop.

mod adam;
mod backprop;
mod dataset;
mod init;
mod loss;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use backprop::{grad, GradOutput, GradientSet};
pub use dataset::{generate_dataset, make_sample, Dataset, DatasetSpec, Sample};
pub(crate) use dataset::schedule_with_retry;
pub use init::{he_init, init_weights};
pub use loss::deep_supervision_loss;
pub use trainer::{
    evaluate_rlne, initial_weights, model_meta, train, train_with, zero_filled_rlne, EpochRecord, TrainConfig, TrainResult,
};

//! Desk-scale regressor trained with the supervised and multi-view losses.

pub mod ablation;
pub mod model;
pub mod train;

pub use model::{init_model, Model, ModelDescriptor, ModelInput, Prediction};
pub use train::{train, TrainConfig, TrainData, TrainHistory};

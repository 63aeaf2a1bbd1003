//! The functional neural network: configuration, parameters, forward and
//! backward passes, optimizers and the mini-batch training loop.

mod config;
mod model;
mod optim;
mod train;

pub use config::{Activation, EarlyStopping, FnnConfig, LayerSpec, OptimizerKind, WeightBasisSpec};
pub use model::{gradients, init_model, FnnModel, Gradients, Layer, Scaling};
pub use optim::{adam_step, sgd_step, sgd_update, AdamState};
pub use train::{train, TrainRecord, WeightSnapshot};

//! A small CPU training engine for the fully connected and convolutional
//! classifiers, with pluggable elementwise activations.

mod activation;
mod adam;
mod checkpoint;
mod loss;
mod model;
mod real;
mod spec;
mod tensor;
mod train;

pub use activation::{AfTriple, Role, ScalarActivation};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use loss::{softmax, softmax_cross_entropy};
pub use model::{build_model, ForwardCache, Model};
pub use real::Real;
pub use spec::{ArchKind, Architecture, LayerPlan, NetworkSpec};
pub use tensor::Tensor;
pub use train::{argmax, batch_size_for, evaluate, evaluate_accuracy, train, Evaluation, TrainConfig, TrainReport, MICRO_BATCH};

//! Dense-network training engine for supervised autoencoding experiments:
//! layers with reverse-mode gradients, composite reconstruction/task losses,
//! SGD and Adam, per-block parameter freezing, the adversarial training
//! schedules, and dataset generation/loading.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod net;
pub mod optim;
pub mod train;

pub use error::NnError;
pub use loss::{accuracy, loss_grad, loss_value, LossKind};
pub use net::{
    forward, init, loss_and_grad, Activation, Block, CompositeLoss, ForwardTrace, Gradients,
    LayerSpec, LossParts, Mode, NetworkParams, NetworkSpec,
};
pub use optim::{Adam, AdamHyper, Sgd};
pub use train::{
    train, Algorithm, EpochRecord, EvalMetric, MetricTrace, PhaseSchedule, TrainOutcome,
    TrainingPlan,
};

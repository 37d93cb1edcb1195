//! Multigraph neural networks: perceptron layers, readout, manual
//! gradients, training and the merged/parallel baselines.

mod checkpoint;
mod engine;
mod model;
mod train;

pub use checkpoint::Checkpoint;
pub use engine::{
    backward, check_permutation_equivariance, forward, forward_batch, forward_stack, prepare, prepare_unsampled,
    GradientSet, Prepared, Tape,
};
pub use model::{
    build_baseline, ArchSpec, Layer, MgnnModel, Nonlinearity, ReadoutSpec, ReadoutStage, Sampling, StageKind, Tower,
    Variant,
};
pub use train::{
    accuracy, dual_trace_csv, env_outputs, evaluate_loss, loss_trace_csv, predict_classes, sample_loss, train,
    train_primal_dual, Adam, ConstrainedEnv, ConstrainedEval, DualStep, LossKind, Sample, Target, TrainConfig,
    TrainReport,
};

//! Graph recurrent forecasting model and its training loop.

mod cheb;
mod config;
mod model;
mod train;
mod weights;

pub use cheb::{cheb_basis, cheb_basis_backward, cheb_conv, ChebOperator, LAMBDA_MAX};
pub use config::{LossMode, ModelConfig, OptimizerKind, TrainConfig};
pub use model::{
    gconv_lstm_step, loss, step_backward, step_forward, GConvLstm, LayerGrads, LayerParams,
    LossGrad, StepCache,
};
pub use train::{evaluate_mse, train, EpochMetrics, Optimizer};
pub use weights::{load_checkpoint, manifest_for, save_checkpoint, ModelWeights, ParamSpec};

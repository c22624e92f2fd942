//! Loss, initialization, optimizer and the training loop.

pub mod adam;
pub mod baselines;
pub mod init;
pub mod loss;
pub mod trainer;

use apjfnn_autograd::ParamStore;

pub use adam::{AdamConfig, AdamState};
pub use init::{glorot_bound, glorot_init};
pub use loss::{bce_loss, bce_value, BCE_EPS};
pub use trainer::{
    batch_gradients, evaluate_model, mix_seed, prepare_batch, score_all, train, write_history,
    EpochRecord, TrainConfig, TrainOutcome,
};

/// State at the step where the loss or a gradient stopped being finite.
#[derive(Debug)]
pub struct DivergenceReport {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    /// Parameters before the failed step.
    pub params: ParamStore<f32>,
}

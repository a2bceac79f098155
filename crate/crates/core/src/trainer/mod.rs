//! Joint-MSE training with Adam, per-epoch checkpoints and loss logging.

pub mod adam;
pub mod batch;
pub mod checkpoint;
pub mod loss;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{build_model, checkpoint_path, load_param_archive, save_param_archive, Checkpoint};
pub use loss::{joint_loss, joint_loss_grad, JointLoss};
pub use train::{
    fit_normalization, predict, predict_with, read_loss_log, train, write_loss_log, EpochLog, TrainConfig, TrainOutcome,
    LOSS_LOG_FILE,
};

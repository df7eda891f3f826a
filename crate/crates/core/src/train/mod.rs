//! He initialization, the multi-step L1 objective, Adam with step-halving
//! learning rate, and the training loop.

mod adam;
mod init;
mod loss;
mod trainer;

pub use adam::{adam_step, lr_schedule, AdamHyper, AdamState};
pub use init::{he_init, init_params};
pub use loss::{loss_multi_step, LossMode};
pub use trainer::{assemble_batch, train_loop, LogRecord, TrainConfig, TrainEvent, TrainOutcome, LOG_HEADER};

//! Loss, Adam and the per-frame training loop.

mod config;
mod optim;
mod trainer;

pub use config::TrainConfig;
pub use optim::{adam_step, global_norm, AdamState, Gradients};
pub use trainer::{
    evaluate, evaluate_constant_velocity, frame_loss_on_tape, frame_offset_targets, frame_targets, loss, loss_and_grads, loss_on_tape, mean_loss,
    save_history, train, train_with, write_history, EpochLog,
};

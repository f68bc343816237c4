//! Training, inference, gradient checking and throughput measurement.

mod bench;
mod checkpoint;
mod gradcheck;
mod infer;
mod schedule;
mod train;

pub use bench::{benchmark_fps, median, FpsReport};
pub use checkpoint::{config_hash, Checkpoint, RngState};
pub use gradcheck::{grad_check, grad_check_graph, grad_check_params, relative_error, REL_ERROR_FLOOR};
pub use infer::{infer_video, InferenceConfig};
pub use schedule::{cosine_lr, warmup_cosine_lr};
pub use train::{frames_tensor, train, write_loss_csv, LossRecord, TrainConfig, TrainOutcome};

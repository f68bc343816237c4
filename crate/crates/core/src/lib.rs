//! Spatio-temporal detection of tiny flying objects in video.
//!
//! The crate bundles a small scalar-generic autograd engine, a CSP backbone
//! with windowed spatio-temporal attention, training, inference and the
//! evaluation metrics used to score detectors on synthetic or on-disk data.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod backbone;
pub mod config;
pub mod dataio;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod head;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod tca;
pub mod tensor;

pub use config::RunConfig;
pub use dataio::{Clip, Frame, Split, SyntheticConfig, Video};
pub use error::{Error, Result};
pub use geometry::{iou, BBox, Detection, GroundTruth, VideoMeta};
pub use metrics::{EvalConfig, MetricsReport};
pub use model::{Detector, ModelConfig};
pub use nn::ParamSet;
pub use pipeline::{Checkpoint, InferenceConfig, TrainConfig};
pub use tca::AugmentConfig;

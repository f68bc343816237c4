//! Annotation IO, clip sampling and the synthetic benchmark.

mod annotations;
mod clip;
mod frame;
pub mod index;
pub mod synthetic;

pub use annotations::{load_annotations, write_annotations, Annotations};
pub use clip::{sample_train_clip, sliding_windows, window_indices, Clip, Video};
pub use frame::Frame;
pub use index::{DatasetIndex, IndexEntry, Split};
pub use synthetic::{generate_synthetic, render_split, render_video, SyntheticConfig};

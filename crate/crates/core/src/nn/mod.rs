//! Parameter storage, layers and the optimizer built on the tape.

pub(crate) mod layers;
mod optim;
mod params;

pub use layers::{Activation, Conv, LayerNorm, Linear};
pub use optim::{clip_grad_norm, Adam};
pub use params::{Ctx, ParamId, ParamSet};

//! Dense tensors, the reverse-mode tape, Adam, gradient checking and
//! checkpoints.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState, Moments};
pub use checkpoint::{Checkpoint, CheckpointHeader};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, DEFAULT_EPS, DEFAULT_MAX_COORDS, NOISE_FLOOR};
pub use params::{Gradients, ModelParams, Param};
pub use tape::{Activation, Backward, Tape, Var};
pub use tensor::Tensor;

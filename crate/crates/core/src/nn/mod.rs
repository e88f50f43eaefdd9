//! Dense networks, reverse-mode gradients and the Adam optimizer.

mod adam;
pub mod checkpoint;
mod mlp;
pub mod tape;

pub use adam::{AdamConfig, AdamState};
pub use mlp::{Activation, DropoutMasks, MlpParams, MlpShape};
pub use tape::{grad, Mat, Tape, Var};

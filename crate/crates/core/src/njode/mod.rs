//! Input-output neural jump ODE: a latent state driven by a neural vector
//! field between observations, reset through an encoder at observations and
//! read out by a decoder.

mod forward;
mod graph;
mod model;
mod runner;

pub use forward::{forward, predict_window, Jump, Mode, NjodeTrajectory};
#[allow(unused_imports)]
pub(crate) use forward::{condition_rows, mask_matrix, row_matrix};
pub use graph::{record_batch, BatchOutputs};
pub use model::{NjodeArch, NjodeParams, OutputLayout};
pub use runner::LatentBatch;

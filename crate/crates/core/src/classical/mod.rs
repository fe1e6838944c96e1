//! The two classical NUS baselines: compressed sensing by iterative soft
//! thresholding, and low-rank completion by Cadzow projections on Hankel
//! matrices.

mod cs;
mod hankel;
mod lr;

pub use cs::{cs_reconstruct, soft_threshold, CsParams};
pub use hankel::{dehankelize, hankel_build, hankel_pencil, hankel_project, singular_values, TrackedProjector};
pub use lr::{cadzow_complete, lr_complete, lr_reconstruct, LrParams, DEFAULT_RANK};

//! Complex 2D NMR grids, non-uniform sampling masks, the classical
//! reconstruction baselines (iterative soft thresholding and Cadzow
//! low-rank Hankel completion) and the global/local evaluation metrics.
//!
//! The indirect (evolution-time) dimension is always the first axis of a
//! [`ComplexGrid`], so NUS masks act on rows.

pub mod classical;
pub mod error;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod nus;
pub mod synth;
mod transform;

pub use error::{Error, Result};
pub use grid::{Axis, ComplexGrid, Direction, Domain};
pub use nus::NusMask;
pub use transform::{dft_1d, to_domain, transform};

pub use num_complex::Complex64;

//! Denoising diffusion for filling skipped indirect-time rows of 2D spectra.
//!
//! A small UNet predicts the noise added by a linear-beta forward process.
//! Two model variants are supported: a plain denoising model, used with
//! known-row resampling at inference, and a conditioned model that also sees
//! the masked data and the row mask. Each can be trained on TT or TF grids.

pub mod convert;
pub mod inpaint;
pub mod model;
pub mod scalar;
pub mod schedule;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod unet;

pub use inpaint::{conditioned_inpaint, inpaint_batch, repaint_inpaint, InpaintJob};
pub use model::{Checkpoint, ModelParams, Variant};
pub use schedule::{ddpm_step, forward_noise, make_schedule, NoiseSchedule, ScheduleConfig};
pub use tensor::Tensor;
pub use train::{split_sizes, train, train_with_progress, TrainConfig, TrainOutcome, TrainReport};
pub use unet::UNetConfig;

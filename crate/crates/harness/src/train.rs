use nmrrecon_core::{Error, Result};
use nmrrecon_diffusion::{train_with_progress, ScheduleConfig, TrainConfig, TrainOutcome, UNetConfig};

use crate::dataset::{Dataset, Split};
use crate::method::Method;

/// Trains the network behind a diffusion `method` on the training split.
/// The UNet input width is set from the method's variant.
pub fn train_method(
    dataset: &Dataset,
    method: Method,
    cfg: &TrainConfig,
    unet: &UNetConfig,
    schedule: &ScheduleConfig,
    progress: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    let variant = method
        .variant()
        .ok_or_else(|| Error::arg(format!("{method} has no trainable model")))?;
    let grids: Vec<_> = dataset.load(Split::Train)?.into_iter().map(|(_, g)| g).collect();
    if grids.is_empty() {
        return Err(Error::arg(format!("{} has no training samples", dataset.dir.display())));
    }
    let unet = UNetConfig { in_channels: variant.in_channels(), ..*unet };
    train_with_progress(&grids, method.domain(), variant, cfg, &unet, schedule, progress)
}

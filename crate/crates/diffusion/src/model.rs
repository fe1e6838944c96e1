//! Trained weights and the checkpoint file.
//!
//! A checkpoint is one line of JSON terminated by `\n`:
//!
//! ```text
//! {"magic":"NMRDIFF-v1","variant":"denoising"|"conditioned","domain":"TT"|"TF"|"FF",
//!  "unet_cfg":{...},"data_gain":..,"schedule":{"T":..,"beta_min":..,"beta_max":..},
//!  "step":..,"val_loss":..,
//!  "layers":[{"path":"time.fc1.weight","shape":[..],"offset":0,"len":..}, ...]}
//! ```
//!
//! followed by every layer's little-endian `f32` values, concatenated in the
//! order of [`crate::unet::param_layout`]. `offset` is the byte position of a
//! layer within that blob and `len` its number of values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use nmrrecon_core::{Domain, Error, Result};

use crate::schedule::ScheduleConfig;
use crate::tensor::Tensor;
use crate::unet::{self, param_layout, UNetConfig};

pub const CHECKPOINT_MAGIC: &str = "NMRDIFF-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Unconditional noise predictor, used with known-row resampling.
    Denoising,
    /// Noise predictor that also sees the masked data and the mask.
    Conditioned,
}

impl Variant {
    pub fn in_channels(self) -> usize {
        match self {
            Variant::Denoising => 2,
            Variant::Conditioned => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Denoising => "denoising",
            Variant::Conditioned => "conditioned",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "denoising" => Ok(Variant::Denoising),
            "conditioned" => Ok(Variant::Conditioned),
            _ => Err(Error::arg(format!("unknown variant '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub variant: Variant,
    pub domain: Domain,
    pub unet: UNetConfig,
    /// Multiplier applied to unit-maximum grids before they enter the
    /// network, chosen at training time to give the data unit mean power.
    pub data_gain: f64,
    pub weights: Vec<Tensor<f32>>,
}

impl ModelParams {
    /// Freshly initialised weights.
    pub fn init(variant: Variant, domain: Domain, unet_cfg: UNetConfig, seed: u64) -> Result<Self> {
        let model = Self {
            variant,
            domain,
            unet: unet_cfg,
            data_gain: 1.0,
            weights: unet::init_params(&unet_cfg, seed),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.unet.validate()?;
        if !(self.data_gain.is_finite() && self.data_gain > 0.0) {
            return Err(Error::arg(format!("data gain {} must be positive", self.data_gain)));
        }
        if self.unet.in_channels != self.variant.in_channels() {
            return Err(Error::arg(format!(
                "{} model needs {} input channels, config has {}",
                self.variant.as_str(),
                self.variant.in_channels(),
                self.unet.in_channels
            )));
        }
        let layout = param_layout(&self.unet);
        if layout.len() != self.weights.len() {
            return Err(Error::arg("weight count does not match the UNet layout"));
        }
        for ((path, shape), w) in layout.iter().zip(&self.weights) {
            if w.shape() != &shape[..] {
                return Err(Error::arg(format!("layer {path} has shape {:?}, expected {shape:?}", w.shape())));
            }
            if !w.all_finite() {
                return Err(Error::Numerical(format!("layer {path} holds non-finite weights")));
            }
        }
        Ok(())
    }

    /// Weights of the layer at `path`, e.g. `"conv_in.weight"`.
    pub fn layer(&self, path: &str) -> Option<&Tensor<f32>> {
        param_layout(&self.unet)
            .iter()
            .position(|(p, _)| p == path)
            .map(|i| &self.weights[i])
    }

    pub fn n_parameters(&self) -> usize {
        self.weights.iter().map(Tensor::len).sum()
    }

    /// Noise estimate for `x_t` (`[B, 2, H, W]`). The conditioned variant
    /// needs `(masked_data [B, 2, H, W], mask [B, 1, H, W])`; the denoising
    /// variant must not receive one.
    pub fn predict(
        &self,
        x_t: &Tensor<f32>,
        timesteps: &[usize],
        condition: Option<(&Tensor<f32>, &Tensor<f32>)>,
    ) -> Result<Tensor<f32>> {
        if x_t.shape().len() != 4 || x_t.shape()[1] != 2 {
            return Err(Error::arg(format!("x_t must be [B, 2, H, W], got {:?}", x_t.shape())));
        }
        let (b, _, h, w) = x_t.dims4();
        if timesteps.len() != b {
            return Err(Error::arg("one timestep per batch item is required"));
        }
        self.unet.check_grid(h, w)?;
        let input = match (self.variant, condition) {
            (Variant::Denoising, None) => x_t.clone(),
            (Variant::Conditioned, Some((data, mask))) => {
                if data.shape() != x_t.shape() || mask.shape() != [b, 1, h, w] {
                    return Err(Error::arg("condition tensors do not match x_t"));
                }
                let mut out = Vec::with_capacity(b * 5 * h * w);
                let plane = h * w;
                for i in 0..b {
                    out.extend_from_slice(&x_t.data()[i * 2 * plane..(i + 1) * 2 * plane]);
                    out.extend_from_slice(&data.data()[i * 2 * plane..(i + 1) * 2 * plane]);
                    out.extend_from_slice(&mask.data()[i * plane..(i + 1) * plane]);
                }
                Tensor::from_vec(&[b, 5, h, w], out)
            }
            (Variant::Denoising, Some(_)) => {
                return Err(Error::arg("the denoising model takes no condition"));
            }
            (Variant::Conditioned, None) => {
                return Err(Error::arg("the conditioned model requires (masked data, mask)"));
            }
        };
        Ok(unet::predict(&self.unet, &self.weights, input, timesteps))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelParams,
    pub schedule: ScheduleConfig,
    /// Optimiser steps taken when the weights were captured.
    pub step: usize,
    pub val_loss: f64,
}

#[derive(Serialize, Deserialize)]
struct LayerEntry {
    path: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    magic: String,
    variant: Variant,
    domain: Domain,
    unet_cfg: UNetConfig,
    data_gain: f64,
    schedule: ScheduleConfig,
    step: usize,
    /// Absent when the loss is not finite (JSON has no NaN).
    val_loss: Option<f64>,
    layers: Vec<LayerEntry>,
}

fn format_err(offset: u64, message: impl Into<String>) -> Error {
    Error::Format { offset, message: message.into() }
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        self.model.validate()?;
        let mut layers = Vec::new();
        let mut offset = 0;
        for ((path, shape), w) in param_layout(&self.model.unet).into_iter().zip(&self.model.weights) {
            layers.push(LayerEntry { path, shape, offset, len: w.len() });
            offset += 4 * w.len();
        }
        let manifest = Manifest {
            magic: CHECKPOINT_MAGIC.into(),
            variant: self.model.variant,
            domain: self.model.domain,
            unet_cfg: self.model.unet,
            data_gain: self.model.data_gain,
            schedule: self.schedule,
            step: self.step,
            val_loss: Some(self.val_loss).filter(|v| v.is_finite()),
            layers,
        };
        let mut out = serde_json::to_vec(&manifest).expect("manifest serializes");
        out.push(b'\n');
        for w in &self.model.weights {
            for v in w.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| format_err(0, "missing manifest terminator"))?;
        let manifest: Manifest = serde_json::from_slice(&bytes[..newline])
            .map_err(|e| format_err(e.column().saturating_sub(1) as u64, format!("bad checkpoint manifest: {e}")))?;
        if manifest.magic != CHECKPOINT_MAGIC {
            return Err(format_err(0, format!("not a checkpoint (magic '{}')", manifest.magic)));
        }
        let layout = param_layout(&manifest.unet_cfg);
        if layout.len() != manifest.layers.len() {
            return Err(format_err(0, "layer list does not match the UNet configuration"));
        }
        let blob = &bytes[newline + 1..];
        let expected: usize = manifest.layers.iter().map(|l| 4 * l.len).sum();
        if blob.len() < expected {
            return Err(Error::Truncated { expected: expected as u64, actual: blob.len() as u64 });
        }
        if blob.len() > expected {
            return Err(format_err((newline + 1 + expected) as u64, "trailing bytes after weights"));
        }
        let mut weights = Vec::with_capacity(layout.len());
        for ((path, shape), entry) in layout.iter().zip(&manifest.layers) {
            let count: usize = shape.iter().product();
            if &entry.path != path || &entry.shape != shape || entry.len != count {
                return Err(format_err(0, format!("layer entry '{}' does not match '{path}'", entry.path)));
            }
            let raw = blob
                .get(entry.offset..entry.offset + 4 * count)
                .ok_or_else(|| format_err((newline + 1 + entry.offset) as u64, "layer outside blob"))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            weights.push(Tensor::from_vec(shape, data));
        }
        let model = ModelParams {
            variant: manifest.variant,
            domain: manifest.domain,
            unet: manifest.unet_cfg,
            data_gain: manifest.data_gain,
            weights,
        };
        model.validate()?;
        Ok(Checkpoint {
            model,
            schedule: manifest.schedule,
            step: manifest.step,
            val_loss: manifest.val_loss.unwrap_or(f64::NAN),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

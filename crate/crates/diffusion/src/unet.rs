//! Small UNet noise predictor.
//!
//! Layout for `depth = D`, channel widths `C_l = base * 2^l`:
//!
//! ```text
//! t -> sinusoidal(E) -> Linear -> SiLU -> Linear -> temb
//! x -> conv_in -> C_0
//! down l:  h = SiLU(conv(h) + time_l(temb)); skip_l = h; h = stride-2 conv -> C_{l+1}
//! mid:     h = SiLU(conv1(h) + time(temb)); h = SiLU(conv2(h))
//! up l:    h = SiLU(conv(upsample(h))) -> C_l; h = SiLU(fuse([h, skip_l]) + time_l(temb))
//! conv_out -> 2 channels
//! ```
//!
//! Parameters are stored as a flat list in the order [`param_layout`] returns.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use nmrrecon_core::{Error, Result};

use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub base_channels: usize,
    pub depth: usize,
    pub time_embed_dim: usize,
}

/// Desk-scale denoising network: 8/16/32 channels over two levels.
impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            in_channels: 2,
            base_channels: 8,
            depth: 2,
            time_embed_dim: 64,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::arg("UNet depth must be at least 1"));
        }
        if self.in_channels == 0 || self.base_channels == 0 {
            return Err(Error::arg("UNet channel counts must be positive"));
        }
        if self.time_embed_dim < 2 || self.time_embed_dim % 2 != 0 {
            return Err(Error::arg("time_embed_dim must be a positive even number"));
        }
        Ok(())
    }

    /// Grid sides must halve cleanly `depth` times.
    pub fn check_grid(&self, height: usize, width: usize) -> Result<()> {
        let unit = 1usize << self.depth;
        if height == 0 || width == 0 || height % unit != 0 || width % unit != 0 {
            return Err(Error::arg(format!(
                "grid {height}x{width} is not divisible by 2^depth = {unit}"
            )));
        }
        Ok(())
    }

    fn width(&self, level: usize) -> usize {
        self.base_channels << level
    }
}

/// Names and shapes of every parameter, in storage order.
pub fn param_layout(cfg: &UNetConfig) -> Vec<(String, Vec<usize>)> {
    let e = cfg.time_embed_dim;
    let mut out = Vec::new();
    let conv = |out: &mut Vec<(String, Vec<usize>)>, name: &str, co: usize, ci: usize| {
        out.push((format!("{name}.weight"), vec![co, ci, 3, 3]));
        out.push((format!("{name}.bias"), vec![co]));
    };
    let linear = |out: &mut Vec<(String, Vec<usize>)>, name: &str, fo: usize, fi: usize| {
        out.push((format!("{name}.weight"), vec![fo, fi]));
        out.push((format!("{name}.bias"), vec![fo]));
    };
    linear(&mut out, "time.fc1", e, e);
    linear(&mut out, "time.fc2", e, e);
    conv(&mut out, "conv_in", cfg.width(0), cfg.in_channels);
    for l in 0..cfg.depth {
        conv(&mut out, &format!("down.{l}.conv"), cfg.width(l), cfg.width(l));
        linear(&mut out, &format!("down.{l}.time"), cfg.width(l), e);
        conv(&mut out, &format!("down.{l}.pool"), cfg.width(l + 1), cfg.width(l));
    }
    let d = cfg.width(cfg.depth);
    conv(&mut out, "mid.conv1", d, d);
    linear(&mut out, "mid.time", d, e);
    conv(&mut out, "mid.conv2", d, d);
    for l in (0..cfg.depth).rev() {
        conv(&mut out, &format!("up.{l}.conv"), cfg.width(l), cfg.width(l + 1));
        conv(&mut out, &format!("up.{l}.fuse"), cfg.width(l), 2 * cfg.width(l));
        linear(&mut out, &format!("up.{l}.time"), cfg.width(l), e);
    }
    conv(&mut out, "conv_out", 2, cfg.width(0));
    out
}

/// He-normal weights, zero biases; the output layer starts small so the
/// initial noise estimate is close to zero.
pub fn init_params<T: Scalar>(cfg: &UNetConfig, seed: u64) -> Vec<Tensor<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    param_layout(cfg)
        .into_iter()
        .map(|(name, shape)| {
            let len: usize = shape.iter().product();
            if name.ends_with(".bias") {
                return Tensor::zeros(&shape);
            }
            let fan_in: usize = shape[1..].iter().product();
            let mut std = (2.0 / fan_in as f64).sqrt();
            if name.starts_with("conv_out") {
                std *= 0.1;
            }
            let data = (0..len)
                .map(|_| T::from_f64(std * rng.sample::<f64, _>(StandardNormal)))
                .collect();
            Tensor::from_vec(&shape, data)
        })
        .collect()
}

/// Sinusoidal embedding of integer timesteps, `[B, dim]`.
pub fn timestep_embedding<T: Scalar>(timesteps: &[usize], dim: usize) -> Tensor<T> {
    let half = dim / 2;
    let mut data = Vec::with_capacity(timesteps.len() * dim);
    for &t in timesteps {
        let freqs = (0..half).map(|i| (-(10_000f64.ln()) * i as f64 / half as f64).exp());
        let angles: Vec<f64> = freqs.map(|f| t as f64 * f).collect();
        data.extend(angles.iter().map(|a| T::from_f64(a.sin())));
        data.extend(angles.iter().map(|a| T::from_f64(a.cos())));
    }
    Tensor::from_vec(&[timesteps.len(), dim], data)
}

/// Records the network on `tape` and returns the `[B, 2, H, W]` output.
pub fn forward<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &UNetConfig,
    params: &[Tensor<T>],
    input: Tensor<T>,
    timesteps: &[usize],
) -> Var {
    let (b, c, h, w) = input.dims4();
    assert_eq!(c, cfg.in_channels, "input has {c} channels, model expects {}", cfg.in_channels);
    assert_eq!(b, timesteps.len());
    assert_eq!(params.len(), param_layout(cfg).len());
    debug_assert!(cfg.check_grid(h, w).is_ok());

    let mut next = 0usize;
    let mut take = |tape: &mut Tape<T>| {
        let v = tape.param(next, params[next].clone());
        next += 1;
        v
    };
    let mut pair = |tape: &mut Tape<T>| (take(tape), take(tape));

    let emb = tape.leaf(timestep_embedding(timesteps, cfg.time_embed_dim));
    let (w1, b1) = pair(tape);
    let (w2, b2) = pair(tape);
    let hidden = tape.linear(emb, w1, b1);
    let hidden = tape.silu(hidden);
    let temb = tape.linear(hidden, w2, b2);

    let x = tape.leaf(input);
    let (wi, bi) = pair(tape);
    let mut h = tape.conv(x, wi, bi, 1);

    let mut skips = Vec::with_capacity(cfg.depth);
    for _ in 0..cfg.depth {
        let (wc, bc) = pair(tape);
        let (wt, bt) = pair(tape);
        let (wp, bp) = pair(tape);
        let conv = tape.conv(h, wc, bc, 1);
        let tb = tape.linear(temb, wt, bt);
        let sum = tape.add_channel(conv, tb);
        let act = tape.silu(sum);
        skips.push(act);
        h = tape.conv(act, wp, bp, 2);
    }

    let (wm1, bm1) = pair(tape);
    let (wmt, bmt) = pair(tape);
    let (wm2, bm2) = pair(tape);
    let conv = tape.conv(h, wm1, bm1, 1);
    let tb = tape.linear(temb, wmt, bmt);
    let sum = tape.add_channel(conv, tb);
    h = tape.silu(sum);
    let conv = tape.conv(h, wm2, bm2, 1);
    h = tape.silu(conv);

    for skip in skips.into_iter().rev() {
        let (wu, bu) = pair(tape);
        let (wf, bf) = pair(tape);
        let (wt, bt) = pair(tape);
        let up = tape.upsample(h);
        let conv = tape.conv(up, wu, bu, 1);
        let act = tape.silu(conv);
        let cat = tape.concat(act, skip);
        let fused = tape.conv(cat, wf, bf, 1);
        let tb = tape.linear(temb, wt, bt);
        let sum = tape.add_channel(fused, tb);
        h = tape.silu(sum);
    }

    let (wo, bo) = pair(tape);
    tape.conv(h, wo, bo, 1)
}

/// Forward pass without gradient bookkeeping.
pub fn predict<T: Scalar>(cfg: &UNetConfig, params: &[Tensor<T>], input: Tensor<T>, timesteps: &[usize]) -> Tensor<T> {
    let mut tape = Tape::inference();
    let out = forward(&mut tape, cfg, params, input, timesteps);
    tape.value(out).clone()
}

/// MSE between the prediction and `target`, with per-parameter gradients.
pub fn loss_and_grad<T: Scalar>(
    cfg: &UNetConfig,
    params: &[Tensor<T>],
    input: Tensor<T>,
    timesteps: &[usize],
    target: Tensor<T>,
) -> (f64, Vec<Tensor<T>>) {
    let mut tape = Tape::new();
    let out = forward(&mut tape, cfg, params, input, timesteps);
    let target = tape.leaf(target);
    let loss = tape.mse(out, target);
    let value = tape.value(loss).data()[0].to_f64();
    let grads = tape
        .backward(loss, params.len())
        .into_iter()
        .zip(params)
        .map(|(g, p)| g.unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    (value, grads)
}

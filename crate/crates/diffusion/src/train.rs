use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use nmrrecon_core::nus::gen_mask;
use nmrrecon_core::{to_domain, ComplexGrid, Domain, Error, Result};

use crate::convert::{grid_to_tensor, mask_plane, zero_skipped_rows};
use crate::model::{Checkpoint, ModelParams, Variant};
use crate::schedule::{gaussian, NoiseSchedule, ScheduleConfig};
use crate::tensor::Tensor;
use crate::unet::{self, UNetConfig};

/// Range of masked fractions drawn for the conditioned model's training masks.
pub const TRAIN_MASK_RATIOS: (f64, f64) = (0.5, 0.95);

const VALIDATION_STREAM: u64 = 0x7A11_DA7E;
const INIT_STREAM: u64 = 0x1417_BA5E;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// `(train_frac, val_frac)`.
    pub split: (f64, f64),
    pub seed: u64,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_steps: 2000,
            batch_size: 16,
            learning_rate: 2e-4,
            split: (0.88, 0.12),
            seed: 0,
            checkpoint_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 || self.batch_size == 0 || self.checkpoint_every == 0 {
            return Err(Error::arg("n_steps, batch_size and checkpoint_every must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg("learning_rate must be positive"));
        }
        let (a, b) = self.split;
        if !(a > 0.0 && b >= 0.0 && ((a + b) - 1.0).abs() < 1e-9) {
            return Err(Error::arg(format!("split fractions ({a}, {b}) must be non-negative and sum to 1")));
        }
        Ok(())
    }
}

/// Train/validation sizes: `round_half_up(n * train_frac)` training items.
pub fn split_sizes(n: usize, train_frac: f64) -> (usize, usize) {
    let n_train = ((n as f64 * train_frac + 0.5).floor() as usize).clamp(1.min(n), n);
    (n_train, n - n_train)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mini-batch loss of every optimiser step.
    pub losses: Vec<f64>,
    /// `(step, loss)` at step 0 and every evaluation point.
    pub validation: Vec<(usize, f64)>,
    pub best_step: usize,
    pub best_val_loss: f64,
    pub n_train: usize,
    pub n_val: usize,
}

impl TrainReport {
    /// Means of the first and the last `window` training losses.
    pub fn window_means(&self, window: usize) -> (f64, f64) {
        let w = window.min(self.losses.len()).max(1);
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        (mean(&self.losses[..w]), mean(&self.losses[self.losses.len() - w..]))
    }
}

struct Adam {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &[Tensor<f32>], lr: f64) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0; p.len()]).collect();
        Self { m: zeros(), v: zeros(), t: 0, lr }
    }

    fn step(&mut self, params: &mut [Tensor<f32>], grads: &[Tensor<f32>]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let step = (self.lr * c2.sqrt() / c1) as f32;
        let eps = (Self::EPS * c2.sqrt()) as f32;
        let (b1, b2) = (Self::B1 as f32, Self::B2 as f32);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, (w, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                *w -= step * m[i] / (v[i].sqrt() + eps);
            }
        }
    }
}

/// One training or validation example before batching.
struct Example {
    x_t: Tensor<f32>,
    condition: Option<(Tensor<f32>, Tensor<f32>)>,
    t: usize,
    eps: Tensor<f32>,
}

fn make_example(
    x0: &Tensor<f32>,
    variant: Variant,
    schedule: &NoiseSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<Example> {
    let (_, _, h, w) = x0.dims4();
    let t = rng.random_range(0..schedule.len());
    let eps = gaussian(x0.shape(), rng);
    let x_t = crate::schedule::forward_noise(x0, t, &eps, schedule)?;
    let condition = match variant {
        Variant::Denoising => None,
        Variant::Conditioned => {
            let ratio = rng.random_range(TRAIN_MASK_RATIOS.0..=TRAIN_MASK_RATIOS.1);
            let mask = gen_mask(h, ratio, rng.random())?;
            let mut masked = x0.clone();
            zero_skipped_rows(&mut masked, &mask.row_flags());
            Some((masked, mask_plane(&mask, w)))
        }
    };
    Ok(Example { x_t, condition, t, eps })
}

/// Mean loss and (optionally) gradients over a batch of examples.
fn batch_loss(model: &ModelParams, examples: &[&Example], grads: bool) -> (f64, Option<Vec<Tensor<f32>>>) {
    let x_t = Tensor::concat_batch(&examples.iter().map(|e| e.x_t.clone()).collect::<Vec<_>>());
    let target = Tensor::concat_batch(&examples.iter().map(|e| e.eps.clone()).collect::<Vec<_>>());
    let t: Vec<usize> = examples.iter().map(|e| e.t).collect();
    let (b, _, h, w) = x_t.dims4();
    let input = match model.variant {
        Variant::Denoising => x_t,
        Variant::Conditioned => {
            let plane = h * w;
            let mut data = Vec::with_capacity(b * 5 * plane);
            for (i, e) in examples.iter().enumerate() {
                let (masked, mask) = e.condition.as_ref().expect("conditioned example");
                data.extend_from_slice(&x_t.data()[i * 2 * plane..(i + 1) * 2 * plane]);
                data.extend_from_slice(masked.data());
                data.extend_from_slice(mask.data());
            }
            Tensor::from_vec(&[b, 5, h, w], data)
        }
    };
    if grads {
        let (loss, g) = unet::loss_and_grad(&model.unet, &model.weights, input, &t, target);
        (loss, Some(g))
    } else {
        let pred = unet::predict(&model.unet, &model.weights, input, &t);
        let sum: f64 = pred
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &q)| ((p - q) as f64).powi(2))
            .sum();
        (sum / pred.len() as f64, None)
    }
}

/// Factor that brings the mean square of the given tensors' entries to one.
pub fn unit_power_gain<'a>(samples: impl IntoIterator<Item = &'a Tensor<f32>>) -> Result<f64> {
    let (mut sum, mut n) = (0.0f64, 0usize);
    for x in samples {
        sum += x.data().iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>();
        n += x.len();
    }
    if n == 0 || !(sum > 0.0) {
        return Err(Error::arg("training data has no signal power"));
    }
    Ok((n as f64 / sum).sqrt())
}

/// Converts every grid to `domain`, scales it to unit maximum magnitude and
/// returns `[1, 2, H, W]` tensors.
pub fn prepare_dataset(dataset: &[ComplexGrid], domain: Domain) -> Result<Vec<Tensor<f32>>> {
    let shape = dataset
        .first()
        .ok_or_else(|| Error::arg("training dataset is empty"))?
        .shape();
    dataset
        .iter()
        .enumerate()
        .map(|(i, g)| {
            if g.shape() != shape {
                return Err(Error::arg(format!("sample {i} has shape {:?}, expected {shape:?}", g.shape())));
            }
            let (norm, _) = to_domain(g, domain)?.normalize()?;
            Ok(grid_to_tensor(&norm))
        })
        .collect()
}

pub struct TrainOutcome {
    /// Weights with the lowest validation loss seen during the run.
    pub checkpoint: Checkpoint,
    pub report: TrainReport,
}

/// Trains a noise predictor on `dataset` expressed in `domain`.
pub fn train(
    dataset: &[ComplexGrid],
    domain: Domain,
    variant: Variant,
    cfg: &TrainConfig,
    unet_cfg: &UNetConfig,
    schedule_cfg: &ScheduleConfig,
) -> Result<TrainOutcome> {
    train_with_progress(dataset, domain, variant, cfg, unet_cfg, schedule_cfg, |_, _| {})
}

/// [`train`] with a callback receiving `(step, batch_loss)` after each update.
pub fn train_with_progress(
    dataset: &[ComplexGrid],
    domain: Domain,
    variant: Variant,
    cfg: &TrainConfig,
    unet_cfg: &UNetConfig,
    schedule_cfg: &ScheduleConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let schedule = schedule_cfg.build()?;
    let mut samples = prepare_dataset(dataset, domain)?;
    let (_, _, h, w) = samples[0].dims4();
    unet_cfg.check_grid(h, w)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let (n_train, n_val) = split_sizes(samples.len(), cfg.split.0);
    let train_idx = &order[..n_train];
    // with too few samples for a held-out part, validate on the training items
    let val_idx = if n_val > 0 { &order[n_train..] } else { train_idx };

    let mut model = ModelParams::init(variant, domain, *unet_cfg, cfg.seed ^ INIT_STREAM)?;
    model.data_gain = unit_power_gain(train_idx.iter().map(|&i| &samples[i]))?;
    for x in &mut samples {
        x.data_mut().iter_mut().for_each(|v| *v *= model.data_gain as f32);
    }

    let mut val_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ VALIDATION_STREAM);
    let val_examples = val_idx
        .iter()
        .map(|&i| make_example(&samples[i], variant, &schedule, &mut val_rng))
        .collect::<Result<Vec<_>>>()?;
    let validate = |model: &ModelParams| {
        let mut total = 0.0;
        for chunk in val_examples.chunks(cfg.batch_size) {
            let refs: Vec<&Example> = chunk.iter().collect();
            total += batch_loss(model, &refs, false).0 * chunk.len() as f64;
        }
        total / val_examples.len() as f64
    };

    let initial_val = validate(&model);
    if !initial_val.is_finite() {
        return Err(Error::Numerical("validation loss is not finite at step 0".into()));
    }
    let mut report = TrainReport {
        losses: Vec::with_capacity(cfg.n_steps),
        validation: vec![(0, initial_val)],
        best_step: 0,
        best_val_loss: initial_val,
        n_train,
        n_val,
    };
    let mut best = model.weights.clone();
    let mut adam = Adam::new(&model.weights, cfg.learning_rate);

    for step in 1..=cfg.n_steps {
        let examples = (0..cfg.batch_size)
            .map(|_| {
                let i = train_idx[rng.random_range(0..n_train)];
                make_example(&samples[i], variant, &schedule, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Example> = examples.iter().collect();
        let (loss, grads) = batch_loss(&model, &refs, true);
        let grads = grads.expect("gradients requested");
        if !loss.is_finite() || grads.iter().any(|g| !g.all_finite()) {
            return Err(Error::Numerical(format!("training loss is not finite at step {step}")));
        }
        adam.step(&mut model.weights, &grads);
        report.losses.push(loss);
        progress(step, loss);

        if step % cfg.checkpoint_every == 0 || step == cfg.n_steps {
            let val = validate(&model);
            if !val.is_finite() {
                return Err(Error::Numerical(format!("validation loss is not finite at step {step}")));
            }
            report.validation.push((step, val));
            if val < report.best_val_loss {
                report.best_val_loss = val;
                report.best_step = step;
                best = model.weights.clone();
            }
        }
    }

    model.weights = best;
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            model,
            schedule: *schedule_cfg,
            step: report.best_step,
            val_loss: report.best_val_loss,
        },
        report,
    })
}

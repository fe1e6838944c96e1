//! Filling skipped rows by reverse diffusion.
//!
//! Both pipelines scale the observed grid to unit maximum magnitude over its
//! kept rows, multiply by the model's data gain, start from pure noise, and
//! finish by undoing the scaling and copying the observed kept rows over the
//! result unchanged.
//! Batched calls give each job its own random stream, so a job's output does
//! not depend on what else shares the batch.

use rand::Rng;

use nmrrecon_core::{ComplexGrid, Error, NusMask, Result};

use crate::convert::{copy_kept_rows, grid_to_tensor, mask_plane, tensor_to_grid, zero_skipped_rows};
use crate::model::{ModelParams, Variant};
use crate::schedule::{ddpm_step, forward_noise, gaussian, NoiseSchedule};
use crate::tensor::Tensor;

/// Largest number of jobs pushed through the network together.
pub const MAX_BATCH: usize = 16;

/// One grid to fill in.
#[derive(Debug, Clone, Copy)]
pub struct InpaintJob<'a> {
    pub observed: &'a ComplexGrid,
    pub mask: &'a NusMask,
}

struct Prepared {
    flags: Vec<bool>,
    scale: f64,
    observed: Tensor<f32>,
    mask: Tensor<f32>,
}

fn prepare(model: &ModelParams, job: &InpaintJob) -> Result<Prepared> {
    let g = job.observed;
    if g.domain() != model.domain {
        return Err(Error::state(format!(
            "model works on {} grids, observed grid is {}",
            model.domain,
            g.domain()
        )));
    }
    job.mask.validate()?;
    if job.mask.n_rows != g.n_indirect() {
        return Err(Error::arg(format!(
            "mask covers {} rows, grid has {}",
            job.mask.n_rows,
            g.n_indirect()
        )));
    }
    model.unet.check_grid(g.n_indirect(), g.n_direct())?;
    let flags = job.mask.row_flags();
    let mut scale = 0.0f64;
    for (i, &kept) in flags.iter().enumerate() {
        if kept {
            scale = g.row(i).iter().fold(scale, |m, z| m.max(z.norm()));
        }
    }
    if scale == 0.0 {
        scale = 1.0;
    }
    let mut observed = grid_to_tensor(&g.scale(model.data_gain / scale));
    zero_skipped_rows(&mut observed, &flags);
    Ok(Prepared {
        mask: mask_plane(job.mask, g.n_direct()),
        flags,
        scale,
        observed,
    })
}

fn finish(model: &ModelParams, job: &InpaintJob, prep: &Prepared, x: Tensor<f32>) -> Result<ComplexGrid> {
    if !x.all_finite() {
        return Err(Error::Numerical("reverse diffusion produced non-finite values".into()));
    }
    let mut out = tensor_to_grid(&x, model.domain, prep.scale / model.data_gain);
    for &r in &job.mask.kept {
        out.row_mut(r).copy_from_slice(job.observed.row(r));
    }
    Ok(out)
}

fn check_variant(model: &ModelParams, wanted: Variant) -> Result<()> {
    if model.variant != wanted {
        return Err(Error::arg(format!(
            "this pipeline needs a {} model, got {}",
            wanted.as_str(),
            model.variant.as_str()
        )));
    }
    Ok(())
}

/// Known-row resampling with a denoising model. `n_resample` counts the
/// passes per timestep; 1 disables resampling.
pub fn repaint_inpaint<R: Rng>(
    model: &ModelParams,
    observed: &ComplexGrid,
    mask: &NusMask,
    schedule: &NoiseSchedule,
    n_resample: usize,
    rng: &mut R,
) -> Result<ComplexGrid> {
    let job = InpaintJob { observed, mask };
    Ok(repaint_batch(model, &[job], schedule, n_resample, std::slice::from_mut(rng))?.remove(0))
}

/// Ancestral sampling with a conditioned model.
pub fn conditioned_inpaint<R: Rng>(
    model: &ModelParams,
    observed: &ComplexGrid,
    mask: &NusMask,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<ComplexGrid> {
    let job = InpaintJob { observed, mask };
    Ok(conditioned_batch(model, &[job], schedule, std::slice::from_mut(rng))?.remove(0))
}

/// Runs whichever pipeline matches the model's variant, one stream per job.
pub fn inpaint_batch<R: Rng>(
    model: &ModelParams,
    jobs: &[InpaintJob],
    schedule: &NoiseSchedule,
    n_resample: usize,
    rngs: &mut [R],
) -> Result<Vec<ComplexGrid>> {
    match model.variant {
        Variant::Denoising => repaint_batch(model, jobs, schedule, n_resample, rngs),
        Variant::Conditioned => conditioned_batch(model, jobs, schedule, rngs),
    }
}

fn stack(items: &[Tensor<f32>]) -> Tensor<f32> {
    Tensor::concat_batch(items)
}

pub fn repaint_batch<R: Rng>(
    model: &ModelParams,
    jobs: &[InpaintJob],
    schedule: &NoiseSchedule,
    n_resample: usize,
    rngs: &mut [R],
) -> Result<Vec<ComplexGrid>> {
    check_variant(model, Variant::Denoising)?;
    if n_resample == 0 {
        return Err(Error::arg("n_resample must be at least 1"));
    }
    if jobs.len() != rngs.len() {
        return Err(Error::arg("one random stream per job is required"));
    }
    let mut out = Vec::with_capacity(jobs.len());
    for (chunk, chunk_rngs) in jobs.chunks(MAX_BATCH).zip(rngs.chunks_mut(MAX_BATCH)) {
        let preps = chunk.iter().map(|j| prepare(model, j)).collect::<Result<Vec<_>>>()?;
        let width = chunk[0].observed.n_direct();
        let mut xs: Vec<Tensor<f32>> = preps
            .iter()
            .zip(chunk_rngs.iter_mut())
            .map(|(p, rng)| gaussian(p.observed.shape(), rng))
            .collect();
        for t in (0..schedule.len()).rev() {
            for pass in 0..n_resample {
                for ((x, p), rng) in xs.iter_mut().zip(&preps).zip(chunk_rngs.iter_mut()) {
                    let eps = gaussian(p.observed.shape(), rng);
                    let known = forward_noise(&p.observed, t, &eps, schedule)?;
                    copy_kept_rows(x.data_mut(), known.data(), &p.flags, width);
                }
                let eps_hat = model.predict(&stack(&xs), &vec![t; xs.len()], None)?;
                for (k, (x, rng)) in xs.iter_mut().zip(chunk_rngs.iter_mut()).enumerate() {
                    *x = ddpm_step(x, &eps_hat.batch_slice(k, 1), t, schedule, rng)?;
                    if pass + 1 < n_resample && t > 0 {
                        let renoise: Tensor<f32> = gaussian(x.shape(), rng);
                        let (a, b) = (schedule.alpha[t].sqrt() as f32, schedule.beta[t].sqrt() as f32);
                        for (v, z) in x.data_mut().iter_mut().zip(renoise.data()) {
                            *v = a * *v + b * z;
                        }
                    }
                }
            }
        }
        for ((job, prep), x) in chunk.iter().zip(&preps).zip(xs) {
            out.push(finish(model, job, prep, x)?);
        }
    }
    Ok(out)
}

pub fn conditioned_batch<R: Rng>(
    model: &ModelParams,
    jobs: &[InpaintJob],
    schedule: &NoiseSchedule,
    rngs: &mut [R],
) -> Result<Vec<ComplexGrid>> {
    check_variant(model, Variant::Conditioned)?;
    if jobs.len() != rngs.len() {
        return Err(Error::arg("one random stream per job is required"));
    }
    let mut out = Vec::with_capacity(jobs.len());
    for (chunk, chunk_rngs) in jobs.chunks(MAX_BATCH).zip(rngs.chunks_mut(MAX_BATCH)) {
        let preps = chunk.iter().map(|j| prepare(model, j)).collect::<Result<Vec<_>>>()?;
        let data = stack(&preps.iter().map(|p| p.observed.clone()).collect::<Vec<_>>());
        let masks = stack(&preps.iter().map(|p| p.mask.clone()).collect::<Vec<_>>());
        let mut xs: Vec<Tensor<f32>> = preps
            .iter()
            .zip(chunk_rngs.iter_mut())
            .map(|(p, rng)| gaussian(p.observed.shape(), rng))
            .collect();
        for t in (0..schedule.len()).rev() {
            let eps_hat = model.predict(&stack(&xs), &vec![t; xs.len()], Some((&data, &masks)))?;
            for (k, (x, rng)) in xs.iter_mut().zip(chunk_rngs.iter_mut()).enumerate() {
                *x = ddpm_step(x, &eps_hat.batch_slice(k, 1), t, schedule, rng)?;
            }
        }
        for ((job, prep), x) in chunk.iter().zip(&preps).zip(xs) {
            out.push(finish(model, job, prep, x)?);
        }
    }
    Ok(out)
}

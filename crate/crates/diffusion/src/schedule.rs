use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use nmrrecon_core::{Error, Result};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Constants that define a linear beta schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    #[serde(rename = "T")]
    pub t: usize,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { t: 200, beta_min: 1e-4, beta_max: 0.04 }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        make_schedule(self.t, self.beta_min, self.beta_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t >= self.len() {
            return Err(Error::arg(format!("timestep {t} outside 0..{}", self.len())));
        }
        Ok(())
    }
}

/// Linearly spaced betas with the derived alphas and cumulative products.
pub fn make_schedule(t: usize, beta_min: f64, beta_max: f64) -> Result<NoiseSchedule> {
    if t < 2 {
        return Err(Error::arg("a schedule needs at least 2 timesteps"));
    }
    if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
        return Err(Error::arg(format!(
            "need 0 < beta_min <= beta_max < 1, got {beta_min} and {beta_max}"
        )));
    }
    let beta: Vec<f64> = (0..t)
        .map(|i| beta_min + (beta_max - beta_min) * i as f64 / (t - 1) as f64)
        .collect();
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let alpha_bar = alpha
        .iter()
        .scan(1.0, |acc, a| {
            *acc *= a;
            Some(*acc)
        })
        .collect();
    Ok(NoiseSchedule { beta, alpha, alpha_bar })
}

/// Closed-form sample of `q(x_t | x_0)`.
pub fn forward_noise<T: Scalar>(x0: &Tensor<T>, t: usize, eps: &Tensor<T>, schedule: &NoiseSchedule) -> Result<Tensor<T>> {
    schedule.check_t(t)?;
    if x0.shape() != eps.shape() {
        return Err(Error::arg(format!(
            "noise shape {:?} differs from data shape {:?}",
            eps.shape(),
            x0.shape()
        )));
    }
    let a = T::from_f64(schedule.alpha_bar[t].sqrt());
    let s = T::from_f64((1.0 - schedule.alpha_bar[t]).sqrt());
    let data = x0.data().iter().zip(eps.data()).map(|(&x, &e)| a * x + s * e).collect();
    Ok(Tensor::from_vec(x0.shape(), data))
}

/// Mean of the ancestral update, before any noise is injected.
pub fn ddpm_mean<T: Scalar>(x_t: &[T], eps_hat: &[T], t: usize, schedule: &NoiseSchedule) -> Vec<T> {
    let coef = T::from_f64(schedule.beta[t] / (1.0 - schedule.alpha_bar[t]).sqrt());
    let inv = T::from_f64(1.0 / schedule.alpha[t].sqrt());
    x_t.iter().zip(eps_hat).map(|(&x, &e)| (x - coef * e) * inv).collect()
}

/// One ancestral step `x_t -> x_{t-1}`; noise is added only for `t > 0`.
pub fn ddpm_step<T: Scalar>(
    x_t: &Tensor<T>,
    eps_hat: &Tensor<T>,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut impl Rng,
) -> Result<Tensor<T>> {
    schedule.check_t(t)?;
    if x_t.shape() != eps_hat.shape() {
        return Err(Error::arg("noise estimate and iterate differ in shape"));
    }
    let mut out = ddpm_mean(x_t.data(), eps_hat.data(), t, schedule);
    if t > 0 {
        let sigma = schedule.beta[t].sqrt();
        for v in &mut out {
            *v += T::from_f64(sigma * rng.sample::<f64, _>(StandardNormal));
        }
    }
    Ok(Tensor::from_vec(x_t.shape(), out))
}

/// Draws a standard normal tensor.
pub fn gaussian<T: Scalar>(shape: &[usize], rng: &mut impl Rng) -> Tensor<T> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| T::from_f64(rng.sample(StandardNormal))).collect())
}

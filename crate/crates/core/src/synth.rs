//! Synthetic 2D FIDs built from exponentially decaying complex sinusoids,
//! which Fourier-transform to Lorentzian lines.

use std::f64::consts::PI;
use std::ops::RangeInclusive;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, Domain};

/// Smallest admissible axis length for synthesis.
pub const MIN_AXIS: usize = 8;

/// One resonance. Frequencies are in cycles per sample, decays in 1/samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakSpec {
    pub freq_indirect: f64,
    pub freq_direct: f64,
    pub amplitude: f64,
    pub decay_indirect: f64,
    pub decay_direct: f64,
    #[serde(default)]
    pub phase: f64,
}

impl PeakSpec {
    pub fn new(freq_indirect: f64, freq_direct: f64, amplitude: f64, decay: f64) -> Self {
        Self {
            freq_indirect,
            freq_direct,
            amplitude,
            decay_indirect: decay,
            decay_direct: decay,
            phase: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let freq_ok = |f: f64| (0.0..1.0).contains(&f);
        if !freq_ok(self.freq_indirect) || !freq_ok(self.freq_direct) {
            return Err(Error::arg("peak frequencies must lie in [0, 1)"));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::arg("peak amplitude must be positive"));
        }
        // zero decay is accepted: an undamped line is still finite on a finite grid
        let decay_ok = |d: f64| d >= 0.0 && d.is_finite();
        if !decay_ok(self.decay_indirect) || !decay_ok(self.decay_direct) {
            return Err(Error::arg("peak decay rates must be non-negative"));
        }
        if !self.phase.is_finite() {
            return Err(Error::arg("peak phase must be finite"));
        }
        Ok(())
    }

    /// Time-domain value of this resonance at sample `(i, j)`.
    #[inline]
    pub fn value(&self, i: usize, j: usize) -> Complex64 {
        let (i, j) = (i as f64, j as f64);
        let angle = self.phase + 2.0 * PI * (self.freq_indirect * i + self.freq_direct * j);
        let envelope = self.amplitude * (-self.decay_indirect * i - self.decay_direct * j).exp();
        Complex64::from_polar(envelope, angle)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpectrumSpec {
    pub peaks: Vec<PeakSpec>,
    /// Standard deviation of the real and of the imaginary noise component.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpectrumSpec {
    pub fn validate(&self) -> Result<()> {
        if self.peaks.is_empty() {
            return Err(Error::arg("a synthetic spectrum needs at least one peak"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::arg("noise_sigma must be non-negative"));
        }
        self.peaks.iter().try_for_each(PeakSpec::validate)
    }
}

/// Sum of the listed resonances plus complex Gaussian noise, in the TT domain.
pub fn synth_fid(spec: &SyntheticSpectrumSpec, n_indirect: usize, n_direct: usize) -> Result<ComplexGrid> {
    if n_indirect < MIN_AXIS || n_direct < MIN_AXIS {
        return Err(Error::arg(format!(
            "grid {n_indirect}x{n_direct} is below the {MIN_AXIS}x{MIN_AXIS} minimum"
        )));
    }
    spec.validate()?;
    let mut grid = ComplexGrid::from_fn(n_indirect, n_direct, Domain::TT, |i, j| {
        spec.peaks.iter().map(|p| p.value(i, j)).sum()
    });
    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for z in grid.data_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *z += Complex64::new(re, im) * spec.noise_sigma;
        }
    }
    Ok(grid)
}

/// Parameter ranges for drawing random synthetic spectra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecRanges {
    pub peak_count: RangeInclusive<usize>,
    pub noise_sigma: RangeInclusive<f64>,
    pub amplitude: RangeInclusive<f64>,
    pub decay: RangeInclusive<f64>,
}

impl Default for SpecRanges {
    fn default() -> Self {
        Self {
            peak_count: 2..=8,
            noise_sigma: 0.005..=0.02,
            amplitude: 0.3..=1.0,
            decay: 0.03..=0.12,
        }
    }
}

/// Draws a random spectrum spec; fully determined by `seed`.
pub fn random_spec(ranges: &SpecRanges, seed: u64) -> SyntheticSpectrumSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(ranges.peak_count.clone());
    let peaks = (0..n)
        .map(|_| PeakSpec {
            freq_indirect: rng.random_range(0.0..1.0),
            freq_direct: rng.random_range(0.0..1.0),
            amplitude: rng.random_range(ranges.amplitude.clone()),
            decay_indirect: rng.random_range(ranges.decay.clone()),
            decay_direct: rng.random_range(ranges.decay.clone()),
            phase: rng.random_range(0.0..2.0 * PI),
        })
        .collect();
    SyntheticSpectrumSpec {
        peaks,
        noise_sigma: rng.random_range(ranges.noise_sigma.clone()),
        seed: rng.random(),
    }
}

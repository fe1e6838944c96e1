use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, Domain};
use crate::nus::{enforce_data_consistency, NusMask};
use crate::transform::to_domain;

/// Iterative soft thresholding settings. The threshold at iteration `k` is
/// `lambda_init * lambda_decay^k` times the current spectrum maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsParams {
    pub n_iters: usize,
    pub lambda_init: f64,
    pub lambda_decay: f64,
    pub tol: f64,
}

impl Default for CsParams {
    fn default() -> Self {
        Self {
            n_iters: 200,
            lambda_init: 0.2,
            lambda_decay: 0.95,
            tol: 1e-6,
        }
    }
}

impl CsParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_iters < 1 {
            return Err(Error::arg("cs n_iters must be at least 1"));
        }
        if !(self.lambda_init > 0.0 && self.lambda_init < 1.0) {
            return Err(Error::arg("cs lambda_init must lie in (0, 1)"));
        }
        if !(self.lambda_decay > 0.0 && self.lambda_decay <= 1.0) {
            return Err(Error::arg("cs lambda_decay must lie in (0, 1]"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::arg("cs tol must be non-negative"));
        }
        Ok(())
    }
}

/// Complex soft threshold: shrinks the magnitude by `lambda`, keeps the phase.
#[inline]
pub fn soft_threshold(value: Complex64, lambda: f64) -> Complex64 {
    let mag = value.norm();
    if mag <= lambda {
        Complex64::new(0.0, 0.0)
    } else {
        value * (1.0 - lambda / mag)
    }
}

/// Reconstructs the FF spectrum from a row-masked TT grid.
///
/// Every iteration ends with the acquired rows restored, so the TT form of
/// the output agrees with `observed` on every kept row.
pub fn cs_reconstruct(observed: &ComplexGrid, mask: &NusMask, params: &CsParams) -> Result<ComplexGrid> {
    params.validate()?;
    if observed.domain() != Domain::TT {
        return Err(Error::state(format!(
            "compressed sensing expects a TT grid, got {}",
            observed.domain()
        )));
    }
    let mut spectrum = to_domain(observed, Domain::FF)?;
    let mut lambda = params.lambda_init;
    for iter in 0..params.n_iters {
        let level = lambda * spectrum.max_magnitude();
        let mut sparse = spectrum.clone();
        sparse.data_mut().iter_mut().for_each(|z| *z = soft_threshold(*z, level));
        let fid = to_domain(&sparse, Domain::TT)?;
        let fid = enforce_data_consistency(&fid, observed, mask)?;
        let next = to_domain(&fid, Domain::FF)?;
        if !next.is_finite() {
            return Err(Error::Numerical(format!("non-finite spectrum at IST iteration {iter}")));
        }
        let norm = spectrum.frobenius_norm();
        let change = next.relative_error(&spectrum);
        spectrum = next;
        lambda *= params.lambda_decay;
        if norm > 0.0 && change < params.tol {
            break;
        }
    }
    Ok(spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nus::{apply_mask, gen_mask};
    use crate::synth::{synth_fid, PeakSpec, SyntheticSpectrumSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(Complex64::new(3.0, 0.0), 1.0), Complex64::new(2.0, 0.0));
        assert_eq!(soft_threshold(Complex64::new(0.0, 0.5), 1.0), Complex64::new(0.0, 0.0));
        assert_eq!(soft_threshold(Complex64::new(0.0, 0.0), 0.0), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn soft_threshold_preserves_phase_and_is_non_expansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..2000 {
            let a = Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let b = Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let lambda = rng.random_range(0.0..2.0);
            let sa = soft_threshold(a, lambda);
            if sa.norm() > 0.0 {
                assert!((sa.arg() - a.arg()).abs() < 1e-12);
            }
            let sb = soft_threshold(b, lambda);
            assert!((sa - sb).norm() <= (a - b).norm() + 1e-12);
        }
    }

    #[test]
    fn params_are_validated() {
        let mut p = CsParams::default();
        p.lambda_init = 1.0;
        assert!(p.validate().is_err());
        p = CsParams { n_iters: 0, ..CsParams::default() };
        assert!(p.validate().is_err());
        p = CsParams { lambda_decay: 0.0, ..CsParams::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn unmasked_input_is_plain_transform() {
        let spec = SyntheticSpectrumSpec {
            peaks: vec![PeakSpec::new(0.2, 0.6, 1.0, 0.05)],
            noise_sigma: 0.01,
            seed: 4,
        };
        let fid = synth_fid(&spec, 32, 32).unwrap();
        let mask = NusMask::full(32);
        let out = cs_reconstruct(&fid, &mask, &CsParams::default()).unwrap();
        let expected = to_domain(&fid, Domain::FF).unwrap();
        assert!(out.relative_error(&expected) < 1e-8);
    }

    #[test]
    fn output_is_consistent_on_kept_rows() {
        let spec = SyntheticSpectrumSpec {
            peaks: vec![PeakSpec::new(0.3, 0.1, 1.0, 0.06), PeakSpec::new(0.7, 0.8, 0.6, 0.04)],
            noise_sigma: 0.0,
            seed: 0,
        };
        let fid = synth_fid(&spec, 32, 32).unwrap();
        let mask = gen_mask(32, 0.6, 8).unwrap();
        let observed = apply_mask(&fid, &mask).unwrap();
        let out = cs_reconstruct(&observed, &mask, &CsParams::default()).unwrap();
        let back = to_domain(&out, Domain::TT).unwrap();
        for &r in &mask.kept {
            for (a, b) in back.row(r).iter().zip(observed.row(r)) {
                assert!((a - b).norm() <= 1e-12);
            }
        }
        // the residual against the truth shrinks relative to zero filling
        let truth = to_domain(&fid, Domain::FF).unwrap();
        let zero_filled = to_domain(&observed, Domain::FF).unwrap();
        assert!(out.relative_error(&truth) < zero_filled.relative_error(&truth));
    }

    #[test]
    fn rejects_wrong_domain() {
        let g = ComplexGrid::zeros(8, 8, Domain::TF);
        assert!(cs_reconstruct(&g, &NusMask::full(8), &CsParams::default()).is_err());
    }
}

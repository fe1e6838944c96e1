use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hankel::{hankel_pencil, hankel_project, TrackedProjector};
use crate::error::{Error, Result};
use crate::grid::{Axis, ComplexGrid, Direction, Domain};
use crate::nus::NusMask;
use crate::transform::transform;

/// Rank used when the number of resonances is not known.
pub const DEFAULT_RANK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrParams {
    pub rank: usize,
    pub n_iters: usize,
    pub tol: f64,
    /// Block power sweeps per iteration for the tracked rank projection;
    /// 0 computes a full SVD at every iteration instead.
    pub subspace_sweeps: usize,
}

impl Default for LrParams {
    fn default() -> Self {
        Self {
            rank: DEFAULT_RANK,
            n_iters: 100,
            tol: 1e-6,
            subspace_sweeps: 2,
        }
    }
}

impl LrParams {
    pub fn validate_for(&self, n_rows: usize) -> Result<()> {
        let (rows, cols) = hankel_pencil(n_rows);
        if self.rank == 0 || self.rank >= rows.min(cols) {
            return Err(Error::arg(format!(
                "rank {} is infeasible for {} indirect points (must be below {})",
                self.rank,
                n_rows,
                rows.min(cols)
            )));
        }
        if self.n_iters < 1 {
            return Err(Error::arg("lr n_iters must be at least 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::arg("lr tol must be non-negative"));
        }
        Ok(())
    }
}

/// Cadzow completion of one indirect-time signal: alternate the rank
/// projection with restoring the acquired samples.
pub fn cadzow_complete(
    observed: &[Complex64],
    kept: &[bool],
    params: &LrParams,
) -> Result<Vec<Complex64>> {
    debug_assert_eq!(observed.len(), kept.len());
    let mut current = observed.to_vec();
    if kept.iter().all(|&k| k) || observed.iter().all(|z| z.norm_sqr() == 0.0) {
        return Ok(current);
    }
    let mut tracker = TrackedProjector::new(params.rank, params.subspace_sweeps);
    for _ in 0..params.n_iters {
        let mut next = if params.subspace_sweeps == 0 {
            hankel_project(&current, params.rank)?
        } else {
            tracker.project(&current)?
        };
        for (k, value) in next.iter_mut().enumerate() {
            if kept[k] {
                *value = observed[k];
            }
        }
        let norm: f64 = current.iter().map(|z| z.norm_sqr()).sum();
        let diff: f64 = next.iter().zip(&current).map(|(a, b)| (a - b).norm_sqr()).sum();
        current = next;
        if norm == 0.0 || (diff / norm).sqrt() < params.tol {
            break;
        }
    }
    Ok(current)
}

/// Low-rank reconstruction of a row-masked TF grid, returned as the FF spectrum.
pub fn lr_reconstruct(observed: &ComplexGrid, mask: &NusMask, params: &LrParams) -> Result<ComplexGrid> {
    let completed = lr_complete(observed, mask, params)?;
    transform(&completed, Axis::Indirect, Direction::Forward)
}

/// Completes a row-masked TF grid column by column (each column is an
/// indirect-time signal at one direct frequency). Kept rows of the result
/// are bit-identical to `observed`.
pub fn lr_complete(observed: &ComplexGrid, mask: &NusMask, params: &LrParams) -> Result<ComplexGrid> {
    if observed.domain() != Domain::TF {
        return Err(Error::state(format!(
            "low-rank reconstruction expects a TF grid, got {}",
            observed.domain()
        )));
    }
    if observed.n_indirect() != mask.n_rows {
        return Err(Error::arg("mask and grid disagree on the number of rows"));
    }
    params.validate_for(observed.n_indirect())?;
    let flags = mask.row_flags();
    let columns: Vec<Vec<Complex64>> = (0..observed.n_direct())
        .into_par_iter()
        .map(|j| cadzow_complete(&observed.column(j), &flags, params))
        .collect::<Result<_>>()?;
    let mut completed = observed.clone();
    for (j, col) in columns.iter().enumerate() {
        completed.set_column(j, col);
    }
    if !completed.is_finite() {
        return Err(Error::Numerical("non-finite value in low-rank completion".into()));
    }
    Ok(completed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nus::{apply_mask, gen_mask};
    use crate::transform::to_domain;

    #[test]
    fn unmasked_input_is_plain_transform() {
        let g = ComplexGrid::from_fn(16, 8, Domain::TF, |i, j| {
            Complex64::from_polar(0.9f64.powi(i as i32), 0.3 * (i + j) as f64)
        });
        let out = lr_reconstruct(&g, &NusMask::full(16), &LrParams { rank: 2, ..LrParams::default() }).unwrap();
        let expected = to_domain(&g, Domain::FF).unwrap();
        assert!(out.relative_error(&expected) < 1e-8);
    }

    #[test]
    fn kept_rows_are_restored() {
        let g = ComplexGrid::from_fn(32, 4, Domain::TF, |i, j| {
            Complex64::from_polar(0.95f64.powi(i as i32), 0.5 * i as f64 + j as f64)
                + Complex64::from_polar(0.6 * 0.9f64.powi(i as i32), -1.1 * i as f64)
        });
        let mask = gen_mask(32, 0.5, 2).unwrap();
        let obs = apply_mask(&g, &mask).unwrap();
        let out = lr_reconstruct(&obs, &mask, &LrParams { rank: 2, ..LrParams::default() }).unwrap();
        let tf = to_domain(&out, Domain::TF).unwrap();
        for &r in &mask.kept {
            for (a, b) in tf.row(r).iter().zip(obs.row(r)) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn infeasible_rank_is_rejected() {
        let g = ComplexGrid::zeros(8, 4, Domain::TF);
        let p = LrParams { rank: 4, ..LrParams::default() };
        assert!(matches!(lr_reconstruct(&g, &NusMask::full(8), &p), Err(Error::Argument(_))));
        let tt = ComplexGrid::zeros(8, 4, Domain::TT);
        assert!(lr_reconstruct(&tt, &NusMask::full(8), &LrParams { rank: 1, ..LrParams::default() }).is_err());
    }
}

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Pencil parameter `L = floor(N/2) + 1`; the Hankel matrix is `L x (N-L+1)`.
pub fn hankel_pencil(n: usize) -> (usize, usize) {
    let rows = n / 2 + 1;
    (rows, n - rows + 1)
}

/// `H[i][j] = signal[i + j]`.
pub fn hankel_build(signal: &[Complex64]) -> Result<DMatrix<Complex64>> {
    if signal.len() < 4 {
        return Err(Error::arg(format!(
            "Hankel embedding needs at least 4 samples, got {}",
            signal.len()
        )));
    }
    let (rows, cols) = hankel_pencil(signal.len());
    Ok(DMatrix::from_fn(rows, cols, |i, j| signal[i + j]))
}

/// Averages each anti-diagonal of `h` back into a length `rows + cols - 1` signal.
pub fn dehankelize(h: &DMatrix<Complex64>) -> Vec<Complex64> {
    let (rows, cols) = h.shape();
    let n = rows + cols - 1;
    let mut sums = vec![Complex64::new(0.0, 0.0); n];
    let mut counts = vec![0usize; n];
    for j in 0..cols {
        for i in 0..rows {
            sums[i + j] += h[(i, j)];
            counts[i + j] += 1;
        }
    }
    sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect()
}

/// Singular values of the signal's Hankel matrix, descending.
pub fn singular_values(signal: &[Complex64]) -> Result<Vec<f64>> {
    let h = hankel_build(signal)?;
    let mut sv: Vec<f64> = h.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Nearest signal (in the anti-diagonal averaging sense) whose Hankel
/// matrix has the given rank: SVD truncation followed by de-Hankelization.
pub fn hankel_project(signal: &[Complex64], rank: usize) -> Result<Vec<Complex64>> {
    let h = hankel_build(signal)?;
    let (rows, cols) = h.shape();
    let max_rank = rows.min(cols);
    if rank == 0 || rank >= max_rank {
        return Err(Error::arg(format!(
            "rank {rank} must lie in 1..{max_rank} for a {rows}x{cols} Hankel matrix"
        )));
    }
    let svd = h.svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut low_rank = DMatrix::<Complex64>::zeros(rows, cols);
    for &k in order.iter().take(rank) {
        let s = svd.singular_values[k];
        let u_k = u.column(k);
        let v_k = v_t.row(k);
        for j in 0..cols {
            let vj = v_k[j] * s;
            for i in 0..rows {
                low_rank[(i, j)] += u_k[i] * vj;
            }
        }
    }
    Ok(dehankelize(&low_rank))
}

/// Rank projection that keeps an estimate of the dominant left singular
/// subspace between calls. Each call refines the basis with a few block
/// power sweeps on `H H^*` instead of computing a full SVD; the first call
/// seeds the basis from an exact SVD.
#[derive(Debug, Clone)]
pub struct TrackedProjector {
    rank: usize,
    sweeps: usize,
    basis: Option<DMatrix<Complex64>>,
}

impl TrackedProjector {
    pub fn new(rank: usize, sweeps: usize) -> Self {
        Self { rank, sweeps, basis: None }
    }

    pub fn project(&mut self, signal: &[Complex64]) -> Result<Vec<Complex64>> {
        let h = hankel_build(signal)?;
        let (rows, cols) = h.shape();
        if self.rank == 0 || self.rank >= rows.min(cols) {
            return Err(Error::arg(format!(
                "rank {} must lie in 1..{} for a {rows}x{cols} Hankel matrix",
                self.rank,
                rows.min(cols)
            )));
        }
        let q = match self.basis.take() {
            Some(mut q) if q.nrows() == rows => {
                for _ in 0..self.sweeps {
                    let y = &h * (h.adjoint() * &q);
                    q = y.qr().q();
                }
                q
            }
            _ => {
                let svd = h.clone().svd(true, false);
                let u = svd.u.expect("u requested");
                let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
                order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
                DMatrix::from_fn(rows, self.rank, |i, k| u[(i, order[k])])
            }
        };
        let low_rank = &q * (q.adjoint() * &h);
        self.basis = Some(q);
        Ok(dehankelize(&low_rank))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn exponentials(n: usize, poles: &[(Complex64, Complex64)]) -> Vec<Complex64> {
        (0..n)
            .map(|k| poles.iter().map(|(amp, z)| amp * z.powu(k as u32)).sum())
            .collect()
    }

    #[test]
    fn five_sample_layout() {
        let s: Vec<_> = (0..5).map(|k| c(k as f64, 0.0)).collect();
        let h = hankel_build(&s).unwrap();
        assert_eq!(h.shape(), (3, 3));
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(h[(i, j)], s[i + j]);
            }
        }
        assert!(hankel_build(&s[..3]).is_err());
    }

    #[test]
    fn single_exponential_is_rank_one() {
        let z = Complex64::from_polar(0.95, 0.7);
        let s = exponentials(32, &[(c(1.0, 0.0), z)]);
        let sv = singular_values(&s).unwrap();
        assert!(sv[1] / sv[0] < 1e-12);
        let p = hankel_project(&s, 1).unwrap();
        for (a, b) in p.iter().zip(&s) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn dehankelize_inverts_build() {
        let s: Vec<_> = (0..11).map(|k| c(k as f64, -(k as f64) * 0.5)).collect();
        let back = dehankelize(&hankel_build(&s).unwrap());
        assert_eq!(back.len(), s.len());
        for (a, b) in back.iter().zip(&s) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn rank_must_be_feasible() {
        let s = vec![c(1.0, 0.0); 8];
        // 5x4 Hankel: ranks 1..=3 allowed
        assert!(hankel_project(&s, 3).is_ok());
        assert!(hankel_project(&s, 4).is_err());
        assert!(hankel_project(&s, 0).is_err());
    }

    #[test]
    fn rank_one_on_rank_three_leaves_residual() {
        let s = exponentials(
            24,
            &[
                (c(1.0, 0.0), Complex64::from_polar(0.96, 0.4)),
                (c(0.7, 0.2), Complex64::from_polar(0.93, 2.1)),
                (c(0.4, 0.0), Complex64::from_polar(0.9, -1.3)),
            ],
        );
        let p = hankel_project(&s, 1).unwrap();
        let residual: f64 = p.iter().zip(&s).map(|(a, b)| (a - b).norm_sqr()).sum();
        assert!(residual > 1e-3);
    }
}

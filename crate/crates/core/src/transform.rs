//! Unitary DFTs along one grid axis and the domain state machine built on
//! top of them.
//!
//! The admitted edges are
//!
//! ```text
//!   FF --inverse(indirect)--> TF --inverse(direct)--> TT
//!   FF <--forward(indirect)-- TF <--forward(direct)-- TT
//! ```
//!
//! Both directions carry a `1/sqrt(N)` factor, so transforms preserve energy.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::{Axis, ComplexGrid, Direction, Domain};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn next_domain(from: Domain, axis: Axis, direction: Direction) -> Option<Domain> {
    use Axis::*;
    use Direction::*;
    use Domain::*;
    match (from, axis, direction) {
        (FF, Indirect, Inverse) => Some(TF),
        (TF, Direct, Inverse) => Some(TT),
        (TT, Direct, Forward) => Some(TF),
        (TF, Indirect, Forward) => Some(FF),
        _ => None,
    }
}

/// Applies the unitary DFT along every row (`Axis::Direct`) or every column
/// (`Axis::Indirect`), updating the domain tag.
pub fn transform(grid: &ComplexGrid, axis: Axis, direction: Direction) -> Result<ComplexGrid> {
    let target = next_domain(grid.domain(), axis, direction).ok_or_else(|| {
        Error::state(format!(
            "{direction:?} transform along the {axis:?} axis is not defined for a {} grid",
            grid.domain()
        ))
    })?;
    let mut out = grid.clone();
    apply_dft(&mut out, axis, direction);
    out.set_domain(target);
    if !out.is_finite() {
        return Err(Error::Numerical("non-finite value after transform".into()));
    }
    Ok(out)
}

/// Moves `grid` along the domain chain until it reaches `target`.
pub fn to_domain(grid: &ComplexGrid, target: Domain) -> Result<ComplexGrid> {
    let rank = |d: Domain| match d {
        Domain::TT => 0,
        Domain::TF => 1,
        Domain::FF => 2,
    };
    let mut current = grid.clone();
    while current.domain() != target {
        current = if rank(current.domain()) < rank(target) {
            match current.domain() {
                Domain::TT => transform(&current, Axis::Direct, Direction::Forward)?,
                _ => transform(&current, Axis::Indirect, Direction::Forward)?,
            }
        } else {
            match current.domain() {
                Domain::FF => transform(&current, Axis::Indirect, Direction::Inverse)?,
                _ => transform(&current, Axis::Direct, Direction::Inverse)?,
            }
        };
    }
    Ok(current)
}

fn apply_dft(grid: &mut ComplexGrid, axis: Axis, direction: Direction) {
    let (rows, cols) = grid.shape();
    match axis {
        Axis::Direct => dft_rows(grid.data_mut(), cols, direction),
        Axis::Indirect => {
            let mut transposed = vec![Complex64::new(0.0, 0.0); rows * cols];
            for i in 0..rows {
                for j in 0..cols {
                    transposed[j * rows + i] = grid.get(i, j);
                }
            }
            dft_rows(&mut transposed, rows, direction);
            let data = grid.data_mut();
            for j in 0..cols {
                for i in 0..rows {
                    data[i * cols + j] = transposed[j * rows + i];
                }
            }
        }
    }
}

/// In-place unitary DFT of consecutive length-`n` chunks of `buf`.
pub(crate) fn dft_rows(buf: &mut [Complex64], n: usize, direction: Direction) {
    let fft = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        match direction {
            Direction::Forward => p.plan_fft_forward(n),
            Direction::Inverse => p.plan_fft_inverse(n),
        }
    });
    fft.process(buf);
    let s = 1.0 / (n as f64).sqrt();
    buf.iter_mut().for_each(|z| *z *= s);
}

/// Unitary DFT of a single 1D signal.
pub fn dft_1d(signal: &[Complex64], direction: Direction) -> Vec<Complex64> {
    let mut out = signal.to_vec();
    if !out.is_empty() {
        dft_rows(&mut out, signal.len(), direction);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(rng: &mut ChaCha8Rng, rows: usize, cols: usize, domain: Domain) -> ComplexGrid {
        ComplexGrid::from_fn(rows, cols, domain, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    /// Textbook O(N^2) unitary DFT.
    fn naive_dft(x: &[Complex64], sign: f64) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (t, v) in x.iter().enumerate() {
                    let ang = sign * 2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                    acc += v * Complex64::from_polar(1.0, ang);
                }
                acc / (n as f64).sqrt()
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft_for_awkward_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [7usize, 12, 17, 30, 64] {
            let x: Vec<_> = (0..n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let fast = dft_1d(&x, Direction::Forward);
            let slow = naive_dft(&x, -1.0);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-12);
            }
            let fast = dft_1d(&x, Direction::Inverse);
            let slow = naive_dft(&x, 1.0);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn inverse_then_forward_direct_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_grid(&mut rng, 24, 40, Domain::TF);
        let tt = transform(&g, Axis::Direct, Direction::Inverse).unwrap();
        let back = transform(&tt, Axis::Direct, Direction::Forward).unwrap();
        assert_eq!(back.domain(), Domain::TF);
        assert!(back.relative_error(&g) < 1e-10);
    }

    #[test]
    fn delta_transforms_to_flat_magnitude() {
        let n = 32;
        let g = ComplexGrid::from_fn(4, n, Domain::TT, |_, j| {
            if j == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let f = transform(&g, Axis::Direct, Direction::Forward).unwrap();
        let expected = 1.0 / (n as f64).sqrt();
        for z in f.data() {
            assert!((z.norm() - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn illegal_edges_are_rejected() {
        let g = ComplexGrid::zeros(8, 8, Domain::TT);
        assert!(matches!(
            transform(&g, Axis::Indirect, Direction::Forward),
            Err(Error::State(_))
        ));
        assert!(matches!(
            transform(&g, Axis::Direct, Direction::Inverse),
            Err(Error::State(_))
        ));
        let f = ComplexGrid::zeros(8, 8, Domain::FF);
        assert!(transform(&f, Axis::Direct, Direction::Inverse).is_err());
        assert!(transform(&f, Axis::Indirect, Direction::Forward).is_err());
        let tf = ComplexGrid::zeros(8, 8, Domain::TF);
        assert!(transform(&tf, Axis::Indirect, Direction::Inverse).is_err());
        assert!(transform(&tf, Axis::Direct, Direction::Forward).is_err());
    }

    #[test]
    fn to_domain_follows_the_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ff = random_grid(&mut rng, 16, 20, Domain::FF);
        assert_eq!(to_domain(&ff, Domain::FF).unwrap(), ff);
        let tf = to_domain(&ff, Domain::TF).unwrap();
        assert_eq!(tf, transform(&ff, Axis::Indirect, Direction::Inverse).unwrap());
        let tt = to_domain(&ff, Domain::TT).unwrap();
        assert_eq!(tt.domain(), Domain::TT);
        let back = to_domain(&tt, Domain::FF).unwrap();
        assert!(back.relative_error(&ff) < 1e-10);
    }

    #[test]
    fn parseval_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = random_grid(&mut rng, 13, 50, Domain::TT);
        let f = to_domain(&g, Domain::FF).unwrap();
        assert!((f.energy() - g.energy()).abs() / g.energy() < 1e-10);
    }
}

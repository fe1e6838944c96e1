use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which representation a grid holds, per axis (indirect, direct).
///
/// `TT` is time x time (the raw FID), `TF` is time x frequency (only the
/// direct axis transformed) and `FF` is the 2D spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Domain {
    TT,
    TF,
    FF,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::TT, Domain::TF, Domain::FF];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::TT => "TT",
            Domain::TF => "TF",
            Domain::FF => "FF",
        }
    }

    /// True when the indirect axis is in the time domain, i.e. rows are
    /// individual acquisitions that NUS can skip.
    pub fn indirect_is_time(self) -> bool {
        matches!(self, Domain::TT | Domain::TF)
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TT" => Ok(Domain::TT),
            "TF" => Ok(Domain::TF),
            "FF" => Ok(Domain::FF),
            other => Err(Error::arg(format!("unknown domain '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Indirect,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// A dense `n_indirect x n_direct` complex array, row-major with the
/// indirect axis outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    n_indirect: usize,
    n_direct: usize,
    data: Vec<Complex64>,
    domain: Domain,
}

impl ComplexGrid {
    pub fn zeros(n_indirect: usize, n_direct: usize, domain: Domain) -> Self {
        Self {
            n_indirect,
            n_direct,
            data: vec![Complex64::new(0.0, 0.0); n_indirect * n_direct],
            domain,
        }
    }

    pub fn from_vec(
        n_indirect: usize,
        n_direct: usize,
        data: Vec<Complex64>,
        domain: Domain,
    ) -> Result<Self> {
        if n_indirect == 0 || n_direct == 0 {
            return Err(Error::arg("grid dimensions must be positive"));
        }
        if data.len() != n_indirect * n_direct {
            return Err(Error::arg(format!(
                "data length {} does not match {}x{}",
                data.len(),
                n_indirect,
                n_direct
            )));
        }
        Ok(Self {
            n_indirect,
            n_direct,
            data,
            domain,
        })
    }

    pub fn from_fn(
        n_indirect: usize,
        n_direct: usize,
        domain: Domain,
        mut f: impl FnMut(usize, usize) -> Complex64,
    ) -> Self {
        let mut data = Vec::with_capacity(n_indirect * n_direct);
        for i in 0..n_indirect {
            for j in 0..n_direct {
                data.push(f(i, j));
            }
        }
        Self {
            n_indirect,
            n_direct,
            data,
            domain,
        }
    }

    pub fn n_indirect(&self) -> usize {
        self.n_indirect
    }

    pub fn n_direct(&self) -> usize {
        self.n_direct
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_indirect, self.n_direct)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub(crate) fn set_domain(&mut self, domain: Domain) {
        self.domain = domain;
    }

    /// Returns the same values relabelled with another domain tag. Only
    /// meaningful when the caller knows the data already is in `domain`.
    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n_direct + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.n_direct + j] = v;
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.n_direct..(i + 1) * self.n_direct]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.data[i * self.n_direct..(i + 1) * self.n_direct]
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.n_indirect).map(|i| self.get(i, j)).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[Complex64]) {
        assert_eq!(values.len(), self.n_indirect);
        for (i, v) in values.iter().enumerate() {
            self.set(i, j, *v);
        }
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm()).collect()
    }

    pub fn max_magnitude(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.energy().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn same_shape(&self, other: &ComplexGrid) -> bool {
        self.shape() == other.shape()
    }

    /// Frobenius norm of `self - other` divided by the norm of `other`.
    pub fn relative_error(&self, reference: &ComplexGrid) -> f64 {
        assert!(self.same_shape(reference));
        let diff: f64 = self
            .data
            .iter()
            .zip(&reference.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let norm = reference.energy();
        if norm == 0.0 {
            diff.sqrt()
        } else {
            (diff / norm).sqrt()
        }
    }

    pub fn scale(&self, factor: f64) -> ComplexGrid {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|z| *z *= factor);
        out
    }

    /// Rounds every component to the nearest `f32`, i.e. the precision the
    /// on-disk format keeps.
    pub fn quantize_f32(&self) -> ComplexGrid {
        let mut out = self.clone();
        for z in out.data.iter_mut() {
            *z = Complex64::new(z.re as f32 as f64, z.im as f32 as f64);
        }
        out
    }

    /// Divides by the maximum pointwise magnitude so the result peaks at 1.
    pub fn normalize(&self) -> Result<(ComplexGrid, f64)> {
        let scale = self.max_magnitude();
        if scale == 0.0 {
            return Err(Error::arg("cannot normalize an all-zero grid"));
        }
        if !scale.is_finite() {
            return Err(Error::Numerical("grid contains non-finite values".into()));
        }
        let mut out = self.clone();
        out.data.iter_mut().for_each(|z| *z /= scale);
        Ok((out, scale))
    }
}

/// Free-function form of [`ComplexGrid::normalize`].
pub fn normalize(grid: &ComplexGrid) -> Result<(ComplexGrid, f64)> {
    grid.normalize()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn normalize_scales_max_to_one() {
        let g = ComplexGrid::from_vec(2, 2, vec![c(4.0, 0.0), c(0.0, 1.0), c(-2.0, 0.0), c(0.0, 0.0)], Domain::FF)
            .unwrap();
        let (n, s) = g.normalize().unwrap();
        assert_eq!(s, 4.0);
        assert_eq!(n.max_magnitude(), 1.0);
    }

    #[test]
    fn normalize_is_identity_on_normalized_grid() {
        let g = ComplexGrid::from_vec(1, 3, vec![c(1.0, 0.0), c(0.3, 0.2), c(0.0, -0.5)], Domain::TT).unwrap();
        let (n, s) = g.normalize().unwrap();
        assert_eq!(s, 1.0);
        assert_eq!(n, g);
    }

    #[test]
    fn normalize_rejects_zero_grid() {
        let g = ComplexGrid::zeros(4, 4, Domain::TT);
        assert!(matches!(g.normalize(), Err(Error::Argument(_))));
    }

    #[test]
    fn domain_parses_case_insensitively() {
        assert_eq!("tf".parse::<Domain>().unwrap(), Domain::TF);
        assert!("xy".parse::<Domain>().is_err());
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(ComplexGrid::from_vec(2, 3, vec![c(0.0, 0.0); 5], Domain::TT).is_err());
    }
}

use crate::error::{Error, Result};
use crate::grid::ComplexGrid;

/// Scale factor for the median absolute deviation of a Gaussian.
const MAD_TO_SIGMA: f64 = 1.4826;

fn check_shapes(reference: &ComplexGrid, reconstruction: &ComplexGrid) -> Result<()> {
    if !reference.same_shape(reconstruction) {
        return Err(Error::arg(format!(
            "shape mismatch: reference {:?}, reconstruction {:?}",
            reference.shape(),
            reconstruction.shape()
        )));
    }
    Ok(())
}

/// Mean squared difference of magnitudes after dividing both spectra by the
/// reference maximum.
pub fn mse(reference: &ComplexGrid, reconstruction: &ComplexGrid) -> Result<f64> {
    check_shapes(reference, reconstruction)?;
    let scale = reference.max_magnitude();
    if scale == 0.0 {
        return Err(Error::arg("reference spectrum is all zero"));
    }
    let sum: f64 = reference
        .data()
        .iter()
        .zip(reconstruction.data())
        .map(|(a, b)| {
            let d = (a.norm() - b.norm()) / scale;
            d * d
        })
        .sum();
    Ok(sum / reference.len() as f64)
}

/// Coefficient of determination of the reconstruction's magnitudes.
pub fn r2(reference: &ComplexGrid, reconstruction: &ComplexGrid) -> Result<f64> {
    check_shapes(reference, reconstruction)?;
    let ref_mag = reference.magnitudes();
    let mean = ref_mag.iter().sum::<f64>() / ref_mag.len() as f64;
    let total: f64 = ref_mag.iter().map(|m| (m - mean) * (m - mean)).sum();
    if total == 0.0 {
        return Err(Error::arg("reference magnitude is constant; R² undefined"));
    }
    let residual: f64 = ref_mag
        .iter()
        .zip(reconstruction.data())
        .map(|(m, z)| (m - z.norm()) * (m - z.norm()))
        .sum();
    Ok(1.0 - residual / total)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Peak magnitude over a robust noise floor (scaled MAD of all magnitudes).
pub fn snr(grid: &ComplexGrid) -> Result<f64> {
    let mut mags = grid.magnitudes();
    let peak = mags.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::arg("SNR of an all-zero spectrum"));
    }
    mags.sort_by(f64::total_cmp);
    let med = median(&mags);
    let mut dev: Vec<f64> = mags.iter().map(|m| (m - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let mad = median(&dev);
    if mad == 0.0 {
        return Err(Error::Degenerate("median absolute deviation is zero".into()));
    }
    Ok(peak / (MAD_TO_SIGMA * mad))
}

pub fn snr_ratio(reference: &ComplexGrid, reconstruction: &ComplexGrid) -> Result<f64> {
    Ok(snr(reconstruction)? / snr(reference)?)
}

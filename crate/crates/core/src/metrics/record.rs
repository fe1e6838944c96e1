use serde::{Deserialize, Serialize};

use super::global::{mse, r2, snr_ratio};
use super::peaks::{hallucination_ratio, match_peaks, pick_peaks};
use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, Domain};

pub const CSV_HEADER: &str = "method,ratio,seed,mse,r2,snr_ratio,hallucination_ratio";

/// Peak picking and matching settings for the local metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeakOptions {
    pub rel_threshold: f64,
    pub gate: f64,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self {
            rel_threshold: 0.1,
            gate: 3.0,
        }
    }
}

/// All four metrics for one (method, ratio, seed) reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub method: String,
    pub ratio: f64,
    pub seed: u64,
    pub mse: f64,
    pub r2: f64,
    pub snr_ratio: f64,
    pub hallucination_ratio: f64,
}

impl MetricsRecord {
    /// One CSV line (no trailing newline) matching [`CSV_HEADER`].
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.method,
            format_sig9(self.ratio),
            self.seed,
            format_sig9(self.mse),
            format_sig9(self.r2),
            format_sig9(self.snr_ratio),
            format_sig9(self.hallucination_ratio)
        )
    }

    pub fn from_csv_fields(fields: &[&str]) -> Result<Self> {
        if fields.len() < 7 {
            return Err(Error::format(0, format!("expected 7 metric fields, got {}", fields.len())));
        }
        let num = |k: usize| -> Result<f64> {
            fields[k]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::format(0, format!("bad number '{}'", fields[k])))
        };
        Ok(Self {
            method: fields[0].trim().to_string(),
            ratio: num(1)?,
            seed: fields[2]
                .trim()
                .parse()
                .map_err(|_| Error::format(0, format!("bad seed '{}'", fields[2])))?,
            mse: num(3)?,
            r2: num(4)?,
            snr_ratio: num(5)?,
            hallucination_ratio: num(6)?,
        })
    }

    pub fn is_finite(&self) -> bool {
        [self.mse, self.r2, self.snr_ratio, self.hallucination_ratio]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Compares a reconstruction to the reference spectrum (both FF).
pub fn evaluate(
    reference: &ComplexGrid,
    reconstruction: &ComplexGrid,
    method: &str,
    ratio: f64,
    seed: u64,
    peaks: &PeakOptions,
) -> Result<MetricsRecord> {
    for g in [reference, reconstruction] {
        if g.domain() != Domain::FF {
            return Err(Error::state(format!("metrics need FF spectra, got {}", g.domain())));
        }
    }
    let ref_peaks = pick_peaks(reference, peaks.rel_threshold)?;
    let rec_peaks = pick_peaks(reconstruction, peaks.rel_threshold)?;
    let matching = match_peaks(&ref_peaks, &rec_peaks, peaks.gate)?;
    let record = MetricsRecord {
        method: method.to_string(),
        ratio,
        seed,
        mse: mse(reference, reconstruction)?,
        r2: r2(reference, reconstruction)?,
        snr_ratio: snr_ratio(reference, reconstruction)?,
        hallucination_ratio: hallucination_ratio(&matching, rec_peaks.len()),
    };
    if !record.is_finite() {
        return Err(Error::Numerical(format!("non-finite metric for {method}")));
    }
    Ok(record)
}

/// Formats with 9 significant digits in the style of C's `%.9g`: fixed
/// notation for exponents in `[-5, 9)`, scientific otherwise, trailing
/// zeros removed.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let sign = if negative { "-" } else { "" };
    if (-4..9).contains(&exp) {
        let body = if exp >= 0 {
            let split = (exp + 1) as usize;
            format!("{}.{}", &digits[..split], &digits[split..])
        } else {
            format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
        };
        let body = body.trim_end_matches('0').trim_end_matches('.');
        format!("{sign}{body}")
    } else {
        let mut m = format!("{}.{}", &digits[..1], &digits[1..]);
        m = m.trim_end_matches('0').trim_end_matches('.').to_string();
        let esign = if exp < 0 { '-' } else { '+' };
        format!("{sign}{m}e{esign}{:02}", exp.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_matches_printf_g() {
        let cases = [
            (0.5, "0.5"),
            (0.95, "0.95"),
            (1.0, "1"),
            (-2.25, "-2.25"),
            (0.123456789123, "0.123456789"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (9.9999999999, "10"),
            (1.0 / 3.0, "0.333333333"),
            (-1e-12, "-1e-12"),
        ];
        for (x, want) in cases {
            assert_eq!(format_sig9(x), want, "formatting {x}");
        }
    }

    #[test]
    fn csv_row_round_trip() {
        let r = MetricsRecord {
            method: "D-TF".into(),
            ratio: 0.7,
            seed: 3,
            mse: 0.000123456789012,
            r2: 0.98765432101,
            snr_ratio: 1.5,
            hallucination_ratio: 0.25,
        };
        let row = r.to_csv_row();
        assert_eq!(row, "D-TF,0.7,3,0.000123456789,0.987654321,1.5,0.25");
        let fields: Vec<&str> = row.split(',').collect();
        let back = MetricsRecord::from_csv_fields(&fields).unwrap();
        assert_eq!(back.to_csv_row(), row);
    }
}

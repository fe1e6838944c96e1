//! Reconstruction quality: global metrics on magnitude spectra (MSE, R²,
//! SNR ratio) and the local peak-based hallucination ratio.

mod assignment;
mod global;
mod peaks;
mod record;

pub use assignment::{linear_sum_assignment, Assignment};
pub use global::{mse, r2, snr, snr_ratio};
pub use peaks::{hallucination_ratio, match_peaks, pick_peaks, Peak, PeakMatching};
pub use record::{evaluate, format_sig9, MetricsRecord, PeakOptions, CSV_HEADER};

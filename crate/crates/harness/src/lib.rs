//! Experiment orchestration for the NUS reconstruction study: synthetic
//! datasets, the method registry, masking-ratio sweeps with resumable CSV
//! output, and CSV/SVG reports.

pub mod config;
pub mod dataset;
pub mod method;
pub mod report;
pub mod sweep;
pub mod train;

pub use config::ExperimentConfig;
pub use dataset::{generate_dataset, Dataset, DatasetConfig, Manifest, Split};
pub use method::{build, Job, Method, MethodSettings, Reconstructor, Registry};
pub use report::{emit_report, Metric, ReportTable};
pub use sweep::{run_cell, run_sweep, run_sweep_with_progress, Cell, ResultRow, SweepConfig, SweepOutcome};
pub use train::train_method;

use nmrrecon_core::Error;

/// Caps the worker pool at `NMRRECON_THREADS` when it is set. Only the first
/// call in a process has an effect.
pub fn init_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var("NMRRECON_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::arg(format!("NMRRECON_THREADS must be a positive integer, got '{value}'")))?;
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Process exit status for an error: 2 configuration, 3 data format,
/// 4 numerical, 1 anything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Argument(_) | Error::State(_) => 2,
        Error::Format { .. } | Error::Truncated { .. } => 3,
        Error::Numerical(_) | Error::Degenerate(_) => 4,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
        Error::Io { .. } => 1,
    }
}

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nmrrecon_core::metrics::{evaluate, format_sig9, MetricsRecord, PeakOptions, CSV_HEADER};
use nmrrecon_core::nus::{apply_mask, gen_mask};
use nmrrecon_core::{to_domain, ComplexGrid, Domain, Error, NusMask, Result};

use crate::dataset::{Dataset, Split};
use crate::method::{build, Job, Method, MethodSettings, Reconstructor};
use crate::report::{emit_report, ReportTable};

pub const RESULTS_FILE: &str = "results.csv";

/// Columns appended to the metric columns in results files.
pub const EXTRA_COLUMNS: &str = "sample,status";

/// Cells handed to a strategy at once.
const CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub methods: Vec<Method>,
    /// Masked fractions of the indirect rows.
    pub ratios: Vec<f64>,
    pub n_seeds: usize,
    pub dataset_dir: PathBuf,
    pub checkpoints: BTreeMap<Method, PathBuf>,
    pub output_dir: PathBuf,
    pub settings: MethodSettings,
    pub peaks: PeakOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            ratios: (0..10).map(|k| (50 + 5 * k) as f64 / 100.0).collect(),
            n_seeds: 5,
            dataset_dir: PathBuf::from("data"),
            checkpoints: BTreeMap::new(),
            output_dir: PathBuf::from("results"),
            settings: MethodSettings::default(),
            peaks: PeakOptions::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::arg("sweep needs at least one method"));
        }
        let mut seen = HashSet::new();
        for m in &self.methods {
            if !seen.insert(*m) {
                return Err(Error::arg(format!("method {m} listed twice")));
            }
        }
        if self.ratios.is_empty() {
            return Err(Error::arg("sweep needs at least one ratio"));
        }
        for &r in &self.ratios {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::arg(format!("ratio {r} outside [0, 1)")));
            }
        }
        if self.n_seeds < 1 {
            return Err(Error::arg("n_seeds must be at least 1"));
        }
        Ok(())
    }
}

/// One (method, ratio, seed, evaluation sample) combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub method: Method,
    pub ratio: f64,
    pub seed: u64,
    pub sample: usize,
}

impl Cell {
    /// Seed of the cell's mask and sampling noise. It ignores the method, so
    /// every method sees the same masks.
    pub fn mask_seed(&self) -> u64 {
        (self.seed << 32) | self.sample as u64
    }

    fn key(&self) -> (Method, String, u64, usize) {
        (self.method, format_sig9(self.ratio), self.seed, self.sample)
    }
}

/// One line of a results file: a metrics record, or the error that
/// prevented it (metrics are then NaN).
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub record: MetricsRecord,
    pub sample: usize,
    pub error: Option<String>,
}

impl ResultRow {
    pub fn failed(cell: &Cell, error: &Error) -> Self {
        let message: String = error
            .to_string()
            .chars()
            .map(|c| if c == ',' || c.is_control() { ' ' } else { c })
            .collect();
        Self {
            record: MetricsRecord {
                method: cell.method.name().to_string(),
                ratio: cell.ratio,
                seed: cell.seed,
                mse: f64::NAN,
                r2: f64::NAN,
                snr_ratio: f64::NAN,
                hallucination_ratio: f64::NAN,
            },
            sample: cell.sample,
            error: Some(message),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn method(&self) -> Result<Method> {
        self.record.method.parse()
    }

    pub fn header() -> String {
        format!("{CSV_HEADER},{EXTRA_COLUMNS}")
    }

    pub fn to_csv(&self) -> String {
        let status = match &self.error {
            None => "ok".to_string(),
            Some(m) => format!("error: {m}"),
        };
        format!("{},{},{status}", self.record.to_csv_row(), self.sample)
    }

    pub fn parse(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |what: &str| Error::Format {
            offset: 0,
            message: format!("results row '{line}': {what}"),
        };
        if fields.len() != 9 {
            return Err(bad("expected 9 fields"));
        }
        let record = MetricsRecord::from_csv_fields(&fields[..7])?;
        let sample = fields[7].trim().parse().map_err(|_| bad("bad sample index"))?;
        let status = fields[8].trim();
        let error = match status {
            "ok" => None,
            s => Some(s.strip_prefix("error:").ok_or_else(|| bad("bad status"))?.trim().to_string()),
        };
        Ok(Self { record, sample, error })
    }

    fn key(&self) -> Result<(Method, String, u64, usize)> {
        Ok((self.method()?, format_sig9(self.record.ratio), self.record.seed, self.sample))
    }
}

/// Reads a results file. A final line cut short by an interrupted write is
/// dropped from the file.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if !text.is_empty() && !text.ends_with('\n') {
        let keep = text.rfind('\n').map_or(0, |i| i + 1);
        text.truncate(keep);
        fs::write(path, &text).map_err(|e| Error::io(path, e))?;
    }
    let mut lines = text.lines();
    match lines.next() {
        None => return Ok(Vec::new()),
        Some(h) if h == ResultRow::header() => {}
        Some(h) => {
            return Err(Error::Format {
                offset: 0,
                message: format!("{}: unexpected header '{h}'", path.display()),
            })
        }
    }
    lines.filter(|l| !l.trim().is_empty()).map(ResultRow::parse).collect()
}

fn append_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut text = String::new();
    if fresh {
        text.push_str(&ResultRow::header());
        text.push('\n');
    }
    for r in rows {
        text.push_str(&r.to_csv());
        text.push('\n');
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

/// The masked observation of `sample` (an FF spectrum) for `cell`, in the
/// method's working domain.
pub fn observe(cell: &Cell, sample: &ComplexGrid) -> Result<(ComplexGrid, NusMask)> {
    let working = to_domain(sample, cell.method.domain())?;
    let mask = gen_mask(working.n_indirect(), cell.ratio, cell.mask_seed())?;
    Ok((apply_mask(&working, &mask)?, mask))
}

/// An evaluation spectrum and, for synthetic data, its number of peaks.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub grid: ComplexGrid,
    pub n_peaks: Option<usize>,
}

/// Runs a group of cells of one method; each result is independent of the
/// rest of the group.
pub fn run_cells(
    recon: &dyn Reconstructor,
    cells: &[Cell],
    samples: &BTreeMap<usize, Sample>,
    peaks: &PeakOptions,
) -> Vec<ResultRow> {
    let mut rows: Vec<Option<ResultRow>> = vec![None; cells.len()];
    let mut prepared = Vec::new();
    for (k, cell) in cells.iter().enumerate() {
        debug_assert_eq!(cell.method, recon.method());
        let observed = samples
            .get(&cell.sample)
            .ok_or_else(|| Error::arg(format!("no evaluation sample {}", cell.sample)))
            .and_then(|s| observe(cell, &s.grid));
        match observed {
            Ok(o) => prepared.push((k, o)),
            Err(e) => rows[k] = Some(ResultRow::failed(cell, &e)),
        }
    }
    let jobs: Vec<Job> = prepared
        .iter()
        .map(|(k, (observed, mask))| {
            let cell = &cells[*k];
            Job { observed, mask, seed: cell.mask_seed(), n_peaks: samples[&cell.sample].n_peaks }
        })
        .collect();
    let outputs = recon.complete(&jobs);
    for ((k, _), out) in prepared.iter().zip(outputs) {
        let cell = &cells[*k];
        let record = out.and_then(|g| score(cell, &samples[&cell.sample].grid, &g, peaks));
        rows[*k] = Some(match record {
            Ok(record) => ResultRow { record, sample: cell.sample, error: None },
            Err(e) => ResultRow::failed(cell, &e),
        });
    }
    rows.into_iter().map(|r| r.expect("every cell has a row")).collect()
}

fn score(cell: &Cell, reference: &ComplexGrid, completed: &ComplexGrid, peaks: &PeakOptions) -> Result<MetricsRecord> {
    let spectrum = to_domain(completed, Domain::FF)?;
    evaluate(reference, &spectrum, cell.method.name(), cell.ratio, cell.seed, peaks)
}

/// Masks `sample`, reconstructs it with `recon` and scores the result.
pub fn run_cell(recon: &dyn Reconstructor, cell: &Cell, sample: &ComplexGrid, peaks: &PeakOptions) -> Result<MetricsRecord> {
    let (observed, mask) = observe(cell, sample)?;
    let completed = recon.reconstruct(&observed, &mask, cell.mask_seed())?;
    score(cell, sample, &completed, peaks)
}

/// Every cell of the sweep in canonical order.
pub fn enumerate_cells(cfg: &SweepConfig, samples: &[usize]) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &method in &cfg.methods {
        for &ratio in &cfg.ratios {
            for seed in 0..cfg.n_seeds as u64 {
                for &sample in samples {
                    cells.push(Cell { method, ratio, seed, sample });
                }
            }
        }
    }
    cells
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Progress {
    pub method: Method,
    pub done: usize,
    pub total: usize,
}

pub struct SweepOutcome {
    pub table: ReportTable,
    /// Cells reconstructed by this call.
    pub computed: usize,
    /// Cells found in an existing results file and skipped.
    pub skipped: usize,
    pub errors: usize,
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    run_sweep_with_progress(cfg, |_| {})
}

/// Runs every missing cell, appending rows to `results.csv` in the output
/// directory as they finish, then writes the report there.
pub fn run_sweep_with_progress(cfg: &SweepConfig, mut progress: impl FnMut(Progress)) -> Result<SweepOutcome> {
    cfg.validate()?;
    let dataset = Dataset::open(&cfg.dataset_dir)?;
    let n_peaks: BTreeMap<usize, usize> =
        dataset.manifest.entries(Split::Eval).map(|e| (e.index, e.spec.peaks.len())).collect();
    let samples: BTreeMap<usize, Sample> = dataset
        .load(Split::Eval)?
        .into_iter()
        .map(|(id, grid)| (id, Sample { grid, n_peaks: n_peaks.get(&id).copied() }))
        .collect();
    if samples.is_empty() {
        return Err(Error::arg(format!("{} has no evaluation samples", cfg.dataset_dir.display())));
    }
    let ids: Vec<usize> = samples.keys().copied().collect();

    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let path = cfg.output_dir.join(RESULTS_FILE);
    let existing = if path.exists() { read_results(&path)? } else { Vec::new() };
    let done: HashSet<_> = existing.iter().map(ResultRow::key).collect::<Result<_>>()?;

    let cells = enumerate_cells(cfg, &ids);
    let skipped = cells.iter().filter(|c| done.contains(&c.key())).count();
    let mut computed = 0;
    for &method in &cfg.methods {
        let pending: Vec<Cell> = cells
            .iter()
            .filter(|c| c.method == method && !done.contains(&c.key()))
            .copied()
            .collect();
        if pending.is_empty() {
            continue;
        }
        let recon = build(method, &cfg.settings, cfg.checkpoints.get(&method).map(PathBuf::as_path))?;
        for chunk in pending.chunks(CHUNK) {
            let rows = run_cells(recon.as_ref(), chunk, &samples, &cfg.peaks);
            append_rows(&path, &rows)?;
            computed += rows.len();
            progress(Progress {
                method,
                done: computed,
                total: cells.len() - skipped,
            });
        }
    }

    let table = ReportTable::from_rows(read_results(&path)?)?;
    let errors = table.rows.iter().filter(|r| !r.is_ok()).count();
    emit_report(&table, &cfg.output_dir)?;
    Ok(SweepOutcome { table, computed, skipped, errors })
}

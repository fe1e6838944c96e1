//! Synthetic datasets on disk: one NMR2D-v1 file per spectrum (FF domain)
//! and a JSON manifest recording the peak list and seed behind each file.

use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use nmrrecon_core::io::{read_grid, write_grid};
use nmrrecon_core::synth::{random_spec, synth_fid, SpecRanges, SyntheticSpectrumSpec};
use nmrrecon_core::{to_domain, ComplexGrid, Domain, Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Total number of spectra, the held-out evaluation ones included.
    pub n_samples: usize,
    /// Trailing spectra reserved for evaluation.
    pub n_eval: usize,
    pub n_indirect: usize,
    pub n_direct: usize,
    pub peak_count: (usize, usize),
    pub noise_sigma: (f64, f64),
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let ranges = SpecRanges::default();
        Self {
            n_samples: 522,
            n_eval: 10,
            n_indirect: 64,
            n_direct: 64,
            peak_count: (*ranges.peak_count.start(), *ranges.peak_count.end()),
            noise_sigma: (*ranges.noise_sigma.start(), *ranges.noise_sigma.end()),
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_eval > self.n_samples {
            return Err(Error::arg("n_eval exceeds n_samples"));
        }
        let (lo, hi) = self.peak_count;
        if lo == 0 || lo > hi {
            return Err(Error::arg(format!("bad peak_count range ({lo}, {hi})")));
        }
        let (lo, hi) = self.noise_sigma;
        if !(lo >= 0.0 && lo <= hi) {
            return Err(Error::arg(format!("bad noise_sigma range ({lo}, {hi})")));
        }
        Ok(())
    }

    pub fn ranges(&self) -> SpecRanges {
        SpecRanges {
            peak_count: self.peak_count.0..=self.peak_count.1,
            noise_sigma: self.noise_sigma.0..=self.noise_sigma.1,
            ..SpecRanges::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub file: String,
    pub split: Split,
    pub seed: u64,
    pub spec: SyntheticSpectrumSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: DatasetConfig,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            offset: 0,
            message: format!("{}: {e}", path.display()),
        })
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

/// Writes the dataset into `out_dir`. The same configuration always
/// produces byte-identical files.
pub fn generate_dataset(cfg: &DatasetConfig, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let ranges = cfg.ranges();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let first_eval = cfg.n_samples - cfg.n_eval;
    let mut entries = Vec::with_capacity(cfg.n_samples);
    for index in 0..cfg.n_samples {
        let seed = rng.next_u64();
        let spec = random_spec(&ranges, seed);
        let grid = to_domain(&synth_fid(&spec, cfg.n_indirect, cfg.n_direct)?, Domain::FF)?;
        let file = format!("sample_{index:04}.nmr2d");
        write_grid(&grid, out_dir.join(&file))?;
        entries.push(ManifestEntry {
            index,
            file,
            split: if index < first_eval { Split::Train } else { Split::Eval },
            seed,
            spec,
        });
    }
    let manifest = Manifest { config: cfg.clone(), entries };
    let path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// A generated dataset opened for reading.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let manifest = Manifest::read(&dir)?;
        Ok(Self { dir, manifest })
    }

    pub fn read(&self, entry: &ManifestEntry) -> Result<ComplexGrid> {
        let grid = read_grid(self.dir.join(&entry.file))?;
        if grid.domain() != Domain::FF {
            return Err(Error::Format {
                offset: 0,
                message: format!("{} holds a {} grid, datasets store FF spectra", entry.file, grid.domain()),
            });
        }
        Ok(grid)
    }

    /// `(index, spectrum)` for every entry of `split`, in manifest order.
    pub fn load(&self, split: Split) -> Result<Vec<(usize, ComplexGrid)>> {
        self.manifest.entries(split).map(|e| Ok((e.index, self.read(e)?))).collect()
    }
}

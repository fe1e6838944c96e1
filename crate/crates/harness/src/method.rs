use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use nmrrecon_core::classical::{cs_reconstruct, lr_complete, CsParams, LrParams};
use nmrrecon_core::{to_domain, ComplexGrid, Domain, Error, NusMask, Result};
use nmrrecon_diffusion::inpaint::MAX_BATCH;
use nmrrecon_diffusion::{inpaint_batch, Checkpoint, InpaintJob, ModelParams, NoiseSchedule, Variant};

/// The six reconstruction methods compared by the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "CS", alias = "cs")]
    Cs,
    #[serde(rename = "LR", alias = "lr")]
    Lr,
    #[serde(rename = "D-TT", alias = "d-tt")]
    DTt,
    #[serde(rename = "D-TF", alias = "d-tf")]
    DTf,
    #[serde(rename = "I-TT", alias = "i-tt")]
    ITt,
    #[serde(rename = "I-TF", alias = "i-tf")]
    ITf,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Cs, Method::Lr, Method::DTt, Method::DTf, Method::ITt, Method::ITf];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cs => "CS",
            Method::Lr => "LR",
            Method::DTt => "D-TT",
            Method::DTf => "D-TF",
            Method::ITt => "I-TT",
            Method::ITf => "I-TF",
        }
    }

    /// Domain in which the method sees the masked data and fills it in.
    pub fn domain(self) -> Domain {
        match self {
            Method::Cs | Method::DTt | Method::ITt => Domain::TT,
            Method::Lr | Method::DTf | Method::ITf => Domain::TF,
        }
    }

    /// Network variant for the diffusion methods.
    pub fn variant(self) -> Option<Variant> {
        match self {
            Method::DTt | Method::DTf => Some(Variant::Denoising),
            Method::ITt | Method::ITf => Some(Variant::Conditioned),
            Method::Cs | Method::Lr => None,
        }
    }

    pub fn diffusion(variant: Variant, domain: Domain) -> Result<Method> {
        match (variant, domain) {
            (Variant::Denoising, Domain::TT) => Ok(Method::DTt),
            (Variant::Denoising, Domain::TF) => Ok(Method::DTf),
            (Variant::Conditioned, Domain::TT) => Ok(Method::ITt),
            (Variant::Conditioned, Domain::TF) => Ok(Method::ITf),
            (_, Domain::FF) => Err(Error::arg("diffusion models work on TT or TF grids, not FF")),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::arg(format!("unknown method '{s}' (expected cs, lr, d-tt, d-tf, i-tt or i-tf)")))
    }
}

/// One masked grid to complete. `seed` drives any sampling randomness;
/// `n_peaks` is the number of lines in the sample when it is known.
#[derive(Debug, Clone, Copy)]
pub struct Job<'a> {
    pub observed: &'a ComplexGrid,
    pub mask: &'a NusMask,
    pub seed: u64,
    pub n_peaks: Option<usize>,
}

/// A reconstruction strategy. Outputs stay in the method's working domain,
/// so kept rows can be compared with the observation directly.
pub trait Reconstructor: Send + Sync {
    fn method(&self) -> Method;

    fn complete(&self, jobs: &[Job]) -> Vec<Result<ComplexGrid>>;

    fn reconstruct(&self, observed: &ComplexGrid, mask: &NusMask, seed: u64) -> Result<ComplexGrid> {
        self.complete(&[Job { observed, mask, seed, n_peaks: None }]).remove(0)
    }
}

/// Settings shared by all strategies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodSettings {
    pub cs: CsParams,
    pub lr: LrParams,
    /// Use a job's known peak count as the LR rank; `lr.rank` otherwise.
    pub lr_rank_from_peaks: bool,
    /// Passes per reverse step for the denoising (repaint) methods.
    pub n_resample: usize,
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self {
            cs: CsParams::default(),
            lr: LrParams::default(),
            lr_rank_from_peaks: true,
            n_resample: 1,
        }
    }
}

struct Compressed(CsParams);

impl Reconstructor for Compressed {
    fn method(&self) -> Method {
        Method::Cs
    }

    fn complete(&self, jobs: &[Job]) -> Vec<Result<ComplexGrid>> {
        jobs.par_iter()
            .map(|j| {
                let spectrum = cs_reconstruct(j.observed, j.mask, &self.0)?;
                to_domain(&spectrum, Domain::TT)
            })
            .collect()
    }
}

struct LowRank {
    params: LrParams,
    from_peaks: bool,
}

impl Reconstructor for LowRank {
    fn method(&self) -> Method {
        Method::Lr
    }

    fn complete(&self, jobs: &[Job]) -> Vec<Result<ComplexGrid>> {
        jobs.par_iter()
            .map(|j| {
                let rank = j.n_peaks.filter(|_| self.from_peaks).unwrap_or(self.params.rank);
                lr_complete(j.observed, j.mask, &LrParams { rank, ..self.params })
            })
            .collect()
    }
}

struct Diffusion {
    method: Method,
    model: ModelParams,
    schedule: NoiseSchedule,
    n_resample: usize,
}

impl Diffusion {
    fn run(&self, jobs: &[Job]) -> Result<Vec<ComplexGrid>> {
        let inputs: Vec<InpaintJob> = jobs
            .iter()
            .map(|j| InpaintJob { observed: j.observed, mask: j.mask })
            .collect();
        let mut rngs: Vec<ChaCha8Rng> = jobs.iter().map(|j| ChaCha8Rng::seed_from_u64(j.seed)).collect();
        inpaint_batch(&self.model, &inputs, &self.schedule, self.n_resample, &mut rngs)
    }
}

impl Reconstructor for Diffusion {
    fn method(&self) -> Method {
        self.method
    }

    fn complete(&self, jobs: &[Job]) -> Vec<Result<ComplexGrid>> {
        let mut out = Vec::with_capacity(jobs.len());
        for chunk in jobs.chunks(MAX_BATCH) {
            match self.run(chunk) {
                Ok(grids) => out.extend(grids.into_iter().map(Ok)),
                // retry one by one so a bad job only fails itself; per-job
                // random streams make the retried results identical
                Err(_) => out.extend(chunk.iter().map(|j| self.run(std::slice::from_ref(j)).map(|mut g| g.remove(0)))),
            }
        }
        out
    }
}

/// Loads a checkpoint and checks it was trained for `method`.
pub fn load_checkpoint(method: Method, path: &Path) -> Result<Checkpoint> {
    let ckpt = Checkpoint::read(path)?;
    let found = Method::diffusion(ckpt.model.variant, ckpt.model.domain)?;
    if found != method {
        return Err(Error::arg(format!(
            "checkpoint {} holds a {found} model, expected {method}",
            path.display()
        )));
    }
    Ok(ckpt)
}

/// Builds the strategy for `method`; diffusion methods need a checkpoint.
pub fn build(method: Method, settings: &MethodSettings, checkpoint: Option<&Path>) -> Result<Box<dyn Reconstructor>> {
    match method {
        Method::Cs => {
            settings.cs.validate()?;
            Ok(Box::new(Compressed(settings.cs)))
        }
        Method::Lr => Ok(Box::new(LowRank { params: settings.lr, from_peaks: settings.lr_rank_from_peaks })),
        _ => {
            let path = checkpoint.ok_or_else(|| Error::arg(format!("no checkpoint configured for method {method}")))?;
            if settings.n_resample == 0 {
                return Err(Error::arg("n_resample must be at least 1"));
            }
            let ckpt = load_checkpoint(method, path)?;
            Ok(Box::new(Diffusion {
                method,
                schedule: ckpt.schedule.build()?,
                model: ckpt.model,
                n_resample: settings.n_resample,
            }))
        }
    }
}

/// The strategies selected for a run, keyed by method.
pub struct Registry {
    entries: BTreeMap<Method, Box<dyn Reconstructor>>,
}

impl Registry {
    pub fn build(
        methods: &[Method],
        settings: &MethodSettings,
        checkpoints: &BTreeMap<Method, PathBuf>,
    ) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for &m in methods {
            entries.insert(m, build(m, settings, checkpoints.get(&m).map(PathBuf::as_path))?);
        }
        Ok(Self { entries })
    }

    pub fn get(&self, method: Method) -> Result<&dyn Reconstructor> {
        self.entries
            .get(&method)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::arg(format!("method {method} is not registered")))
    }

    pub fn methods(&self) -> impl Iterator<Item = Method> + '_ {
        self.entries.keys().copied()
    }
}

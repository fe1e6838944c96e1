//! Random row-wise non-uniform sampling.
//!
//! A mask records which indirect increments (rows) were acquired. The
//! `ratio` everywhere is the fraction of rows *removed*, so `ratio = 0.7`
//! keeps 30% of the rows.
//!
//! Mask generation is portable: given `(n_rows, ratio, seed)` the kept set
//! is reproducible in any language from this description.
//!
//! 1. `n_keep = floor(n_rows * (1 - ratio) + 0.5)`.
//! 2. Generator: PCG XSL-RR 128/64 (`Pcg64`) constructed with
//!    `state = (seed << 64) | (seed ^ 0x9E37_79B9_7F4A_7C15)` and
//!    `stream = 0xA02B_DBF7_BB3C_0A7A_C28F_A16A_64AB_F96`. As in `rand_pcg`,
//!    the increment is `(stream << 1) | 1`, the LCG starts from
//!    `state + increment` and is stepped once; each output steps the LCG
//!    (multiplier `0x2360_ED05_1FC6_5DA4_4385_DF64_9FCC_F645`) and applies
//!    XSL-RR to the new state.
//! 3. Bounded draws `uniform(n)` use Lemire's multiply-shift with rejection:
//!    draw `x = next_u64()`, let `m = x * n` (128-bit); reject while
//!    `low64(m) < (2^64 - n) mod n`; return `high64(m)`.
//! 4. Candidates are rows `1..n_rows` in ascending order. A partial
//!    Fisher-Yates shuffle selects `n_keep - 1` of them: for
//!    `k in 0..n_keep-1`, swap position `k` with `k + uniform(len - k)`.
//! 5. Kept rows are `{0}` plus the selected prefix, sorted ascending.

use std::path::Path;

use rand_core::RngCore;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, Domain};

const STATE_MIX: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM: u128 = 0xA02B_DBF7_BB3C_0A7A_C28F_A16A_64AB_F96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NusMask {
    pub n_rows: usize,
    pub ratio: f64,
    pub seed: u64,
    pub kept: Vec<usize>,
}

fn mask_rng(seed: u64) -> Pcg64 {
    let state = ((seed as u128) << 64) | (seed ^ STATE_MIX) as u128;
    Pcg64::new(state, STREAM)
}

fn uniform_below(rng: &mut Pcg64, n: usize) -> usize {
    let n = n as u64;
    let threshold = n.wrapping_neg() % n;
    loop {
        let m = (rng.next_u64() as u128) * (n as u128);
        if (m as u64) >= threshold {
            return (m >> 64) as usize;
        }
    }
}

/// Number of rows a mask with the given removal ratio keeps.
pub fn kept_count(n_rows: usize, ratio: f64) -> usize {
    (n_rows as f64 * (1.0 - ratio) + 0.5).floor() as usize
}

impl NusMask {
    pub fn generate(n_rows: usize, ratio: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&ratio) {
            return Err(Error::arg(format!("masking ratio {ratio} outside [0, 1)")));
        }
        if n_rows < 2 {
            return Err(Error::arg("a mask needs at least two rows"));
        }
        let n_keep = kept_count(n_rows, ratio);
        if n_keep < 1 {
            return Err(Error::arg(format!(
                "ratio {ratio} leaves no rows out of {n_rows}"
            )));
        }
        let mut rng = mask_rng(seed);
        let mut candidates: Vec<usize> = (1..n_rows).collect();
        let extra = n_keep - 1;
        for k in 0..extra {
            let j = k + uniform_below(&mut rng, candidates.len() - k);
            candidates.swap(k, j);
        }
        let mut kept = Vec::with_capacity(n_keep);
        kept.push(0);
        kept.extend_from_slice(&candidates[..extra]);
        kept.sort_unstable();
        Ok(Self {
            n_rows,
            ratio,
            seed,
            kept,
        })
    }

    /// A mask that keeps every row.
    pub fn full(n_rows: usize) -> Self {
        Self {
            n_rows,
            ratio: 0.0,
            seed: 0,
            kept: (0..n_rows).collect(),
        }
    }

    pub fn is_kept(&self, row: usize) -> bool {
        self.kept.binary_search(&row).is_ok()
    }

    /// One flag per row, `true` where the row was acquired.
    pub fn row_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.n_rows];
        for &r in &self.kept {
            flags[r] = true;
        }
        flags
    }

    pub fn validate(&self) -> Result<()> {
        if self.kept.is_empty() {
            return Err(Error::arg("mask keeps no rows"));
        }
        if self.kept.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::arg("kept rows must be strictly increasing"));
        }
        if self.kept.last().is_some_and(|&r| r >= self.n_rows) {
            return Err(Error::arg("kept row index out of range"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("mask serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mask: NusMask = serde_json::from_str(text)
            .map_err(|e| Error::format(e.column().saturating_sub(1) as u64, format!("bad mask JSON: {e}")))?;
        mask.validate()?;
        Ok(mask)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub fn gen_mask(n_rows: usize, ratio: f64, seed: u64) -> Result<NusMask> {
    NusMask::generate(n_rows, ratio, seed)
}

fn check_rows(grid: &ComplexGrid, mask: &NusMask) -> Result<()> {
    if grid.n_indirect() != mask.n_rows {
        return Err(Error::arg(format!(
            "grid has {} indirect rows but the mask covers {}",
            grid.n_indirect(),
            mask.n_rows
        )));
    }
    Ok(())
}

/// Zeroes every row the mask did not acquire.
pub fn apply_mask(grid: &ComplexGrid, mask: &NusMask) -> Result<ComplexGrid> {
    check_rows(grid, mask)?;
    if grid.domain() == Domain::FF {
        return Err(Error::state(
            "masking skips indirect time increments and needs a TT or TF grid",
        ));
    }
    let flags = mask.row_flags();
    let mut out = grid.clone();
    for (i, keep) in flags.iter().enumerate() {
        if !keep {
            out.row_mut(i).iter_mut().for_each(|z| *z = Default::default());
        }
    }
    Ok(out)
}

/// Takes kept rows from `observed` and every other row from `estimate`.
pub fn enforce_data_consistency(
    estimate: &ComplexGrid,
    observed: &ComplexGrid,
    mask: &NusMask,
) -> Result<ComplexGrid> {
    if !estimate.same_shape(observed) || estimate.domain() != observed.domain() {
        return Err(Error::arg(format!(
            "estimate {:?}/{} and observed {:?}/{} differ",
            estimate.shape(),
            estimate.domain(),
            observed.shape(),
            observed.domain()
        )));
    }
    check_rows(estimate, mask)?;
    let mut out = estimate.clone();
    for &r in &mask.kept {
        out.row_mut(r).copy_from_slice(observed.row(r));
    }
    Ok(out)
}

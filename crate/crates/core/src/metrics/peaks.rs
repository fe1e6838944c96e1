use serde::{Deserialize, Serialize};

use super::assignment::linear_sum_assignment;
use crate::error::{Error, Result};
use crate::grid::ComplexGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub row: usize,
    pub col: usize,
    pub magnitude: f64,
}

impl Peak {
    pub fn distance(&self, other: &Peak) -> f64 {
        let dr = self.row as f64 - other.row as f64;
        let dc = self.col as f64 - other.col as f64;
        (dr * dr + dc * dc).sqrt()
    }
}

/// Result of gated one-to-one peak matching. Pairs are
/// `(reference index, reconstruction index, distance)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PeakMatching {
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_ref: Vec<usize>,
    pub unmatched_rec: Vec<usize>,
}

impl PeakMatching {
    pub fn total_distance(&self) -> f64 {
        self.pairs.iter().map(|p| p.2).sum()
    }
}

/// Strict local maxima of the magnitude in their 3x3 neighbourhood
/// (neighbours outside the grid are ignored) that reach
/// `rel_threshold * max`. Sorted by descending magnitude.
pub fn pick_peaks(grid: &ComplexGrid, rel_threshold: f64) -> Result<Vec<Peak>> {
    if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
        return Err(Error::arg(format!("peak threshold {rel_threshold} outside (0, 1)")));
    }
    let (rows, cols) = grid.shape();
    let mags = grid.magnitudes();
    let global_max = mags.iter().copied().fold(0.0, f64::max);
    if global_max == 0.0 {
        return Ok(Vec::new());
    }
    let floor = rel_threshold * global_max;
    let mut peaks = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let m = mags[i * cols + j];
            if m < floor {
                continue;
            }
            let is_max = (i.saturating_sub(1)..=(i + 1).min(rows - 1)).all(|r| {
                (j.saturating_sub(1)..=(j + 1).min(cols - 1))
                    .all(|c| (r == i && c == j) || mags[r * cols + c] < m)
            });
            if is_max {
                peaks.push(Peak {
                    row: i,
                    col: j,
                    magnitude: m,
                });
            }
        }
    }
    peaks.sort_by(|a, b| {
        b.magnitude
            .total_cmp(&a.magnitude)
            .then(a.row.cmp(&b.row))
            .then(a.col.cmp(&b.col))
    });
    Ok(peaks)
}

/// Minimum-total-distance matching; pairs farther apart than `gate` are
/// dropped after solving and reported as unmatched on both sides.
pub fn match_peaks(reference: &[Peak], reconstruction: &[Peak], gate: f64) -> Result<PeakMatching> {
    if !(gate > 0.0) {
        return Err(Error::arg("matching gate must be positive"));
    }
    let (nr, nc) = (reference.len(), reconstruction.len());
    let cost: Vec<f64> = reference
        .iter()
        .flat_map(|a| reconstruction.iter().map(move |b| a.distance(b)))
        .collect();
    let assignment = linear_sum_assignment(&cost, nr, nc);
    let mut matching = PeakMatching::default();
    let mut rec_used = vec![false; nc];
    for (i, col) in assignment.col_for_row.iter().enumerate() {
        match col {
            Some(j) if cost[i * nc + j] <= gate => {
                matching.pairs.push((i, *j, cost[i * nc + j]));
                rec_used[*j] = true;
            }
            _ => matching.unmatched_ref.push(i),
        }
    }
    matching.unmatched_rec = (0..nc).filter(|&j| !rec_used[j]).collect();
    Ok(matching)
}

/// Fraction of reconstructed peaks without a reference counterpart.
pub fn hallucination_ratio(matching: &PeakMatching, n_rec_peaks: usize) -> f64 {
    if n_rec_peaks == 0 {
        0.0
    } else {
        matching.unmatched_rec.len() as f64 / n_rec_peaks as f64
    }
}

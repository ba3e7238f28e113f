//! Dynamic time warping of a query series onto a reference series.
//!
//! The local cost is the absolute difference `|q_i - r_j|`. The accumulated
//! cost matrix is never materialised; only two cost rows and one byte of
//! back-pointer per visited cell are kept, so memory is `O(n_q * width)`
//! where `width` is the band width (the full reference length without a band).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Series;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepPattern {
    /// Steps (1,1), (1,0), (0,1), each weighing the local cost once.
    #[default]
    SymmetricUniform,
    /// As above but the diagonal step weighs the local cost twice, so every
    /// path's weights sum to `n_q + n_r`.
    SymmetricDiag2,
}

impl StepPattern {
    fn diagonal_weight(self) -> f64 {
        match self {
            StepPattern::SymmetricUniform => 1.0,
            StepPattern::SymmetricDiag2 => 2.0,
        }
    }
}

impl fmt::Display for StepPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepPattern::SymmetricUniform => "symmetric_uniform",
            StepPattern::SymmetricDiag2 => "symmetric_diag2",
        })
    }
}

impl FromStr for StepPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric_uniform" => Ok(StepPattern::SymmetricUniform),
            "symmetric_diag2" => Ok(StepPattern::SymmetricDiag2),
            other => Err(Error::InvalidConfig(format!("unknown step pattern '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AlignConfig {
    pub step_pattern: StepPattern,
    /// Sakoe-Chiba half-width: only cells with `|i - j| <= radius` are visited.
    pub band_radius: Option<usize>,
}

impl AlignConfig {
    pub fn banded(radius: usize) -> Self {
        Self {
            band_radius: Some(radius),
            ..Self::default()
        }
    }
}

/// Optimal warping path (0-based `(query, reference)` index pairs) and its cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub path: Vec<(usize, usize)>,
    pub distance: f64,
}

const DIAG: u8 = 0;
const VERT: u8 = 1; // from (i - 1, j): the query advances alone
const HORIZ: u8 = 2; // from (i, j - 1): the reference advances alone
const ORIGIN: u8 = 3;

/// Aligns two series. See [`align_values`].
pub fn align(query: &Series, reference: &Series, config: &AlignConfig) -> Result<Alignment> {
    align_values(query.values(), reference.values(), config)
}

/// Minimum-cost monotone alignment of `query` onto `reference`.
///
/// Ties between predecessors resolve diagonal first, then vertical, then
/// horizontal, so the returned path is deterministic.
///
/// The table is swept by anti-diagonals (`i + j` constant). Cells on one
/// anti-diagonal do not depend on each other, so the inner loop has no
/// loop-carried dependency. Memory is three cost diagonals plus one step code
/// per visited cell.
pub fn align_values(query: &[f64], reference: &[f64], config: &AlignConfig) -> Result<Alignment> {
    let (n, m) = (query.len(), reference.len());
    if n == 0 || m == 0 {
        return Err(Error::EmptySeries);
    }
    let radius = match config.band_radius {
        Some(r) if r < n.abs_diff(m) => {
            return Err(Error::InfeasibleBand {
                radius: r,
                length_difference: n.abs_diff(m),
            })
        }
        Some(r) => r.min(n + m),
        None => n + m,
    };
    // query rows visited on anti-diagonal d, from |i - (d - i)| <= radius
    let rows = |d: usize| {
        let lo = d.saturating_sub(m - 1).max(d.saturating_sub(radius).div_ceil(2));
        let hi = (n - 1).min(d).min((d + radius) / 2);
        (lo, hi)
    };
    let diagonals = n + m - 1;
    let mut offsets = Vec::with_capacity(diagonals + 1);
    offsets.push(0usize);
    for d in 0..diagonals {
        let (lo, hi) = rows(d);
        offsets.push(offsets[d] + (hi + 1 - lo));
    }
    let mut steps = vec![0u8; offsets[diagonals]];
    let reversed: Vec<f64> = reference.iter().rev().copied().collect();

    let w_diag = config.step_pattern.diagonal_weight();
    // costs indexed by query row plus one; the slots just outside a diagonal's
    // rows hold +inf so that neighbours never read stale values
    let mut two_back = vec![f64::INFINITY; n + 2];
    let mut one_back = vec![f64::INFINITY; n + 2];
    let mut current = vec![f64::INFINITY; n + 2];
    one_back[1] = w_diag * (query[0] - reference[0]).abs();
    steps[0] = ORIGIN;

    for d in 1..diagonals {
        let (lo, hi) = rows(d);
        let len = hi + 1 - lo;
        current[lo] = f64::INFINITY;
        current[hi + 2] = f64::INFINITY;
        // reference index d - i for i = lo.. runs backwards; in `reversed` it runs forwards
        let r = &reversed[m - 1 + lo - d..m - 1 + lo - d + len];
        let q = &query[lo..=hi];
        let diag_from = &two_back[lo..lo + len];
        let vert_from = &one_back[lo..lo + len];
        let horiz_from = &one_back[lo + 1..lo + 1 + len];
        let out = &mut current[lo + 1..lo + 1 + len];
        let codes = &mut steps[offsets[d]..offsets[d + 1]];
        for k in 0..len {
            let c = (q[k] - r[k]).abs();
            let diag = diag_from[k] + w_diag * c;
            let vert = vert_from[k] + c;
            let horiz = horiz_from[k] + c;
            let take_vert = vert < diag;
            let first = if take_vert { vert } else { diag };
            let take_horiz = horiz < first;
            out[k] = if take_horiz { horiz } else { first };
            codes[k] = if take_horiz { HORIZ } else { take_vert as u8 * VERT };
        }
        std::mem::swap(&mut two_back, &mut one_back);
        std::mem::swap(&mut one_back, &mut current);
    }
    let distance = one_back[n];

    let mut path = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n - 1, m - 1);
    loop {
        path.push((i, j));
        let d = i + j;
        match steps[offsets[d] + i - rows(d).0] {
            ORIGIN => break,
            DIAG => {
                i -= 1;
                j -= 1;
            }
            VERT => i -= 1,
            _ => j -= 1,
        }
    }
    path.reverse();
    Ok(Alignment { path, distance })
}

/// Checks that `path` is a valid warping path for lengths `(n, m)`.
pub fn validate_path(path: &[(usize, usize)], n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(Error::EmptySeries);
    }
    match (path.first(), path.last()) {
        (Some(&(0, 0)), Some(&last)) if last == (n - 1, m - 1) => {}
        _ => {
            return Err(Error::InconsistentPath(format!(
                "path must run from (0, 0) to ({}, {})",
                n - 1,
                m - 1
            )))
        }
    }
    for w in path.windows(2) {
        let (di, dj) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
        if !matches!((di, dj), (1, 1) | (1, 0) | (0, 1)) {
            return Err(Error::InconsistentPath(format!(
                "illegal step {:?} -> {:?}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// Projects query values onto the reference timeline: each reference index
/// takes the mean of all query values paired with it.
pub fn warp_values(query: &[f64], reference_len: usize, alignment: &Alignment) -> Result<Vec<f64>> {
    validate_path(&alignment.path, query.len(), reference_len)?;
    let mut sums = vec![0.0; reference_len];
    let mut counts = vec![0u32; reference_len];
    for &(i, j) in &alignment.path {
        sums[j] += query[i];
        counts[j] += 1;
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| if c == 1 { s } else { s / f64::from(c) })
        .collect())
}

/// The warped query as a series on the reference clock.
pub fn warp_to_reference(query: &Series, reference: &Series, alignment: &Alignment) -> Result<Series> {
    let values = warp_values(query.values(), reference.len(), alignment)?;
    Series::new(query.channel(), reference.times().to_vec(), values)
}

//! Gradient-domain smoothing of concatenated parameter sequences.

use super::linalg::{solve_tridiag, TriDiagSystem};
use crate::error::{Error, Result};

/// Half-open frame window `[lo, hi]` (both ends pinned) around a junction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlendWindow {
    pub junction: usize,
    pub lo: usize,
    pub hi: usize,
}

/// Windows of `radius` frames on each side of every junction, clipped to the
/// sequence and to the midpoint between neighbouring junctions.
pub fn blend_windows(frames: usize, junctions: &[usize], radius: usize) -> Result<Vec<BlendWindow>> {
    let mut js: Vec<usize> = junctions.to_vec();
    js.sort_unstable();
    js.dedup();
    if let Some(&bad) = js.iter().find(|&&j| j == 0 || j >= frames) {
        return Err(Error::Invalid(format!(
            "junction {bad} is not inside a sequence of {frames} frames"
        )));
    }
    let mut windows = Vec::with_capacity(js.len());
    for (k, &j) in js.iter().enumerate() {
        let mut lo = j.saturating_sub(radius);
        let mut hi = (j + radius).min(frames - 1);
        if k > 0 {
            lo = lo.max((js[k - 1] + j) / 2);
        }
        if k + 1 < js.len() {
            hi = hi.min((j + js[k + 1]) / 2);
        }
        windows.push(BlendWindow { junction: j, lo, hi });
    }
    Ok(windows)
}

/// Blends a row-major `frames x dim` sequence across the given junctions.
///
/// A junction at index `j` is the step between frames `j - 1` and `j`. Inside
/// each window, and independently per dimension, the frames are replaced by
/// the least-squares fit to a target gradient with both window ends pinned:
/// the target is the input step everywhere except at the junction, where it
/// is the mean of the two flanking steps. Frames outside all windows, and the
/// pinned window ends, are returned bit-identical.
pub fn blend_sequence_1d(data: &[f64], dim: usize, junctions: &[usize], radius: usize) -> Result<Vec<f64>> {
    if dim == 0 || data.len() % dim != 0 {
        return Err(Error::DimensionMismatch(format!(
            "sequence of {} values is not a multiple of dimension {dim}",
            data.len()
        )));
    }
    let frames = data.len() / dim;
    let mut out = data.to_vec();
    if junctions.is_empty() {
        return Ok(out);
    }
    let at = |f: usize, c: usize| data[f * dim + c];
    for window in blend_windows(frames, junctions, radius)? {
        let BlendWindow { junction: j, lo, hi } = window;
        if hi < lo + 2 {
            continue;
        }
        let interior = hi - lo - 1;
        for c in 0..dim {
            let target = |f: usize| -> f64 {
                if f + 1 != j {
                    return at(f + 1, c) - at(f, c);
                }
                let left = (j >= 2).then(|| at(j - 1, c) - at(j - 2, c));
                let right = (j + 1 < frames).then(|| at(j + 1, c) - at(j, c));
                match (left, right) {
                    (Some(l), Some(r)) => 0.5 * (l + r),
                    (Some(v), None) | (None, Some(v)) => v,
                    (None, None) => 0.0,
                }
            };
            let mut rhs: Vec<f64> = (lo + 1..hi).map(|k| target(k - 1) - target(k)).collect();
            rhs[0] += at(lo, c);
            rhs[interior - 1] += at(hi, c);
            let system = TriDiagSystem {
                sub: vec![-1.0; interior - 1],
                main: vec![2.0; interior],
                sup: vec![-1.0; interior - 1],
                rhs,
            };
            let solved = solve_tridiag(&system)?;
            for (k, v) in solved.into_iter().enumerate() {
                out[(lo + 1 + k) * dim + c] = v;
            }
        }
    }
    Ok(out)
}

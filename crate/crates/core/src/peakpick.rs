//! Histogram-constrained peak picking.
//!
//! For every pitch `p` with target count `K = h[p]`, [`peak_pick`] marks the
//! `K` highest local maxima of column `p` of a posteriorgram. Ties go to the
//! earlier frame. The column sums of the result equal the histogram exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::Histogram;
use crate::grid::{LabelMatrix, Posteriorgram};

#[derive(Debug, Error, PartialEq)]
pub enum PeakPickError {
    #[error("radius must be at least one frame")]
    ZeroRadius,
    #[error("pitch {pitch}: count {count} exceeds the {frames} available frames")]
    CountExceedsFrames {
        pitch: usize,
        count: u32,
        frames: usize,
    },
    #[error("pitch {pitch}: {count} onsets requested but only {peaks} local peaks")]
    TooFewPeaks { pitch: usize, count: u32, peaks: usize },
    #[error("dimension mismatch: {left} vs {right} pitches")]
    DimensionMismatch { left: usize, right: usize },
}

/// What to do when a column has fewer local peaks than its target count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    Error,
    #[default]
    TopValues,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeakPickConfig {
    pub radius_frames: usize,
    pub fallback: Fallback,
}

impl Default for PeakPickConfig {
    fn default() -> Self {
        Self {
            radius_frames: 1,
            fallback: Fallback::TopValues,
        }
    }
}

/// Indices `t` whose value is `>=` every in-range neighbour within `radius`.
pub fn local_peaks(column: &[f32], radius: usize) -> Vec<usize> {
    let n = column.len();
    (0..n)
        .filter(|&t| {
            let lo = t.saturating_sub(radius);
            let hi = (t + radius).min(n.saturating_sub(1));
            (lo..=hi).all(|s| s == t || column[t] >= column[s])
        })
        .collect()
}

fn by_value_then_frame(column: &[f32]) -> impl Fn(&usize, &usize) -> std::cmp::Ordering + '_ {
    move |&a, &b| column[b].total_cmp(&column[a]).then(a.cmp(&b))
}

/// Frames selected for one column; the flag reports whether the fallback fired.
pub fn pick_column(
    column: &[f32],
    count: u32,
    cfg: &PeakPickConfig,
    pitch: usize,
) -> Result<(Vec<usize>, bool), PeakPickError> {
    if cfg.radius_frames == 0 {
        return Err(PeakPickError::ZeroRadius);
    }
    let k = count as usize;
    if k > column.len() {
        return Err(PeakPickError::CountExceedsFrames {
            pitch,
            count,
            frames: column.len(),
        });
    }
    if k == 0 {
        return Ok((Vec::new(), false));
    }
    let mut peaks = local_peaks(column, cfg.radius_frames);
    peaks.sort_by(by_value_then_frame(column));
    if peaks.len() >= k {
        peaks.truncate(k);
        return Ok((peaks, false));
    }
    if cfg.fallback == Fallback::Error {
        return Err(PeakPickError::TooFewPeaks {
            pitch,
            count,
            peaks: peaks.len(),
        });
    }
    let mut taken = vec![false; column.len()];
    for &t in &peaks {
        taken[t] = true;
    }
    let mut rest: Vec<usize> = (0..column.len()).filter(|&t| !taken[t]).collect();
    rest.sort_by(by_value_then_frame(column));
    let missing = k - peaks.len();
    peaks.extend_from_slice(&rest[..missing]);
    Ok((peaks, true))
}

/// Peak-picking result with the number of pitches that needed the fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct PickOutcome {
    pub labels: LabelMatrix,
    pub fallback_pitches: usize,
}

pub fn peak_pick_with_stats(
    z: &Posteriorgram,
    h: &Histogram,
    cfg: &PeakPickConfig,
) -> Result<PickOutcome, PeakPickError> {
    let grid = *z.grid();
    if h.pitch_count() != grid.pitches() {
        return Err(PeakPickError::DimensionMismatch {
            left: grid.pitches(),
            right: h.pitch_count(),
        });
    }
    let values = z.values();
    let mut labels = LabelMatrix::zeros(grid);
    let mut fallback_pitches = 0;
    let mut column = Vec::with_capacity(grid.frames());
    for (p, &count) in h.counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        column.clear();
        column.extend(values.column(p).iter().copied());
        let (frames, fell_back) = pick_column(&column, count, cfg, p)?;
        fallback_pitches += fell_back as usize;
        for t in frames {
            labels.set(t, p, true);
        }
    }
    Ok(PickOutcome {
        labels,
        fallback_pitches,
    })
}

/// Marks, per pitch, the `h[p]` highest local peaks of `z`.
pub fn peak_pick(
    z: &Posteriorgram,
    h: &Histogram,
    cfg: &PeakPickConfig,
) -> Result<LabelMatrix, PeakPickError> {
    peak_pick_with_stats(z, h, cfg).map(|o| o.labels)
}

/// Column sums of a posteriorgram, accumulated in `f64`.
pub fn predicted_histogram(z: &Posteriorgram) -> Vec<f64> {
    let values = z.values();
    let mut sums = vec![0.0f64; values.ncols()];
    for row in values.rows() {
        for (s, &v) in sums.iter_mut().zip(row) {
            *s += v as f64;
        }
    }
    sums
}

pub fn squared_distance(h_pred: &[f64], h: &Histogram) -> Result<f64, PeakPickError> {
    if h_pred.len() != h.counts.len() {
        return Err(PeakPickError::DimensionMismatch {
            left: h_pred.len(),
            right: h.counts.len(),
        });
    }
    Ok(h_pred
        .iter()
        .zip(&h.counts)
        .map(|(&a, &b)| (a - b as f64).powi(2))
        .sum())
}

/// Euclidean distance between a predicted and a target histogram.
pub fn histogram_distance(h_pred: &[f64], h: &Histogram) -> Result<f64, PeakPickError> {
    squared_distance(h_pred, h).map(f64::sqrt)
}

/// Threshold decoder for when no histogram is available: a frame is an onset
/// if it is a local peak (within `radius`) with value `>= threshold`.
pub fn threshold_peaks(z: &Posteriorgram, threshold: f32, radius: usize) -> LabelMatrix {
    let grid = *z.grid();
    let values = z.values();
    let mut labels = LabelMatrix::zeros(grid);
    let mut column = Vec::with_capacity(grid.frames());
    for p in 0..grid.pitches() {
        column.clear();
        column.extend(values.column(p).iter().copied());
        if !column.iter().any(|&v| v >= threshold) {
            continue;
        }
        for t in local_peaks(&column, radius.max(1)) {
            if column[t] >= threshold {
                labels.set(t, p, true);
            }
        }
    }
    labels
}

//! Note-level scoring.
//!
//! A reference and an estimated onset match when their pitches agree and
//! their times differ by at most the tolerance. Each note matches at most
//! once; `matched` is the size of a maximum-cardinality matching, found with
//! Hopcroft–Karp. The timing-free variant ([`f_histogram`]) only compares
//! per-pitch counts.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::EventTrack;

/// Onset tolerance used for all reported scores.
pub const ONSET_TOLERANCE_S: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("tolerance must be positive, got {0}")]
    NonPositiveTolerance(f64),
    #[error("cannot evaluate an empty corpus")]
    EmptyCorpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub matched: usize,
    pub ref_count: usize,
    pub est_count: usize,
}

impl EvalResult {
    /// Precision is 1 with no estimates, recall is 1 with no references.
    pub fn from_counts(matched: usize, ref_count: usize, est_count: usize) -> Self {
        let precision = if est_count == 0 {
            1.0
        } else {
            matched as f64 / est_count as f64
        };
        let recall = if ref_count == 0 {
            1.0
        } else {
            matched as f64 / ref_count as f64
        };
        let f_score = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f_score,
            matched,
            ref_count,
            est_count,
        }
    }
}

/// Size of a maximum matching in a bipartite graph given as left-side adjacency lists.
pub fn max_bipartite_matching(right_len: usize, adj: &[Vec<usize>]) -> usize {
    const INF: u32 = u32::MAX;
    let left_len = adj.len();
    let mut match_l: Vec<Option<usize>> = vec![None; left_len];
    let mut match_r: Vec<Option<usize>> = vec![None; right_len];
    let mut dist = vec![INF; left_len];
    let mut matched = 0;

    loop {
        // layer the graph from free left vertices
        let mut queue = VecDeque::new();
        for u in 0..left_len {
            if match_l[u].is_none() {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = INF;
            }
        }
        let mut found_free = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                match match_r[v] {
                    None => found_free = true,
                    Some(w) if dist[w] == INF => {
                        dist[w] = dist[u] + 1;
                        queue.push_back(w);
                    }
                    Some(_) => {}
                }
            }
        }
        if !found_free {
            return matched;
        }

        fn augment(
            u: usize,
            adj: &[Vec<usize>],
            dist: &mut [u32],
            match_l: &mut [Option<usize>],
            match_r: &mut [Option<usize>],
        ) -> bool {
            for &v in &adj[u] {
                let ok = match match_r[v] {
                    None => true,
                    Some(w) => {
                        dist[w] == dist[u].wrapping_add(1) && augment(w, adj, dist, match_l, match_r)
                    }
                };
                if ok {
                    match_l[u] = Some(v);
                    match_r[v] = Some(u);
                    return true;
                }
            }
            dist[u] = INF;
            false
        }

        for u in 0..left_len {
            if match_l[u].is_none() && augment(u, adj, &mut dist, &mut match_l, &mut match_r) {
                matched += 1;
            }
        }
    }
}

/// Number of matched notes under the onset tolerance.
pub fn matched_notes(reference: &EventTrack, estimate: &EventTrack, tol_s: f64) -> usize {
    let refs = reference.events();
    let ests = estimate.events();
    // group estimate indices by pitch, each group sorted by onset
    let max_pitch = refs
        .iter()
        .chain(ests)
        .map(|e| e.pitch)
        .max()
        .map_or(0, |p| p + 1);
    let mut by_pitch: Vec<Vec<usize>> = vec![Vec::new(); max_pitch];
    for (j, e) in ests.iter().enumerate() {
        by_pitch[e.pitch].push(j);
    }
    let adj: Vec<Vec<usize>> = refs
        .iter()
        .map(|r| {
            let group = &by_pitch[r.pitch];
            // Compare differences, not shifted bounds, so the window agrees
            // exactly with `|e - r| <= tol` at the boundary.
            let lo = group.partition_point(|&j| r.onset_s - ests[j].onset_s > tol_s);
            group[lo..]
                .iter()
                .take_while(|&&j| ests[j].onset_s - r.onset_s <= tol_s)
                .copied()
                .collect()
        })
        .collect();
    max_bipartite_matching(ests.len(), &adj)
}

pub fn match_notes(
    reference: &EventTrack,
    estimate: &EventTrack,
    tol_s: f64,
) -> Result<EvalResult, MetricError> {
    if !(tol_s > 0.0) {
        return Err(MetricError::NonPositiveTolerance(tol_s));
    }
    Ok(EvalResult::from_counts(
        matched_notes(reference, estimate, tol_s),
        reference.len(),
        estimate.len(),
    ))
}

/// Timing-free score: `matched = Σ_p min(ref_p, est_p)`.
pub fn f_histogram(reference: &EventTrack, estimate: &EventTrack) -> EvalResult {
    let n = reference.pitch_count().max(estimate.pitch_count());
    let mut r = vec![0usize; n];
    let mut e = vec![0usize; n];
    for ev in reference.events() {
        r[ev.pitch] += 1;
    }
    for ev in estimate.events() {
        e[ev.pitch] += 1;
    }
    let matched = r.iter().zip(&e).map(|(&a, &b)| a.min(b)).sum();
    EvalResult::from_counts(matched, reference.len(), estimate.len())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scoring {
    Onset { tol_s: f64 },
    Histogram,
}

impl Scoring {
    pub fn score(&self, reference: &EventTrack, estimate: &EventTrack) -> Result<EvalResult, MetricError> {
        match *self {
            Scoring::Onset { tol_s } => match_notes(reference, estimate, tol_s),
            Scoring::Histogram => Ok(f_histogram(reference, estimate)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEval {
    pub summary: EvalResult,
    pub per_track: Vec<EvalResult>,
}

/// Micro-averaged score over `(reference, estimate)` pairs.
pub fn evaluate_corpus(
    pairs: &[(&EventTrack, &EventTrack)],
    scoring: Scoring,
) -> Result<CorpusEval, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let per_track = pairs
        .iter()
        .map(|(r, e)| scoring.score(r, e))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CorpusEval {
        summary: micro_average(&per_track),
        per_track,
    })
}

pub fn micro_average(results: &[EvalResult]) -> EvalResult {
    let (m, r, e) = results.iter().fold((0, 0, 0), |(m, r, e), x| {
        (m + x.matched, r + x.ref_count, e + x.est_count)
    });
    EvalResult::from_counts(m, r, e)
}

/// One row of an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub track_id: String,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub matched: usize,
    pub ref_count: usize,
    pub est_count: usize,
}

impl EvalRow {
    pub fn new(track_id: impl Into<String>, r: &EvalResult) -> Self {
        Self {
            track_id: track_id.into(),
            precision: r.precision,
            recall: r.recall,
            f_score: r.f_score,
            matched: r.matched,
            ref_count: r.ref_count,
            est_count: r.est_count,
        }
    }
}

/// Paired onset / histogram report as written by `countem eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tolerance_s: f64,
    pub onset: Vec<EvalRow>,
    pub onset_summary: EvalRow,
    pub histogram: Vec<EvalRow>,
    pub histogram_summary: EvalRow,
}

impl EvalReport {
    /// Builds the report from `(track_id, reference, estimate)` triples.
    pub fn build(
        tracks: &[(String, EventTrack, EventTrack)],
        tolerance_s: f64,
    ) -> Result<Self, MetricError> {
        let pairs: Vec<_> = tracks.iter().map(|(_, r, e)| (r, e)).collect();
        let onset = evaluate_corpus(&pairs, Scoring::Onset { tol_s: tolerance_s })?;
        let hist = evaluate_corpus(&pairs, Scoring::Histogram)?;
        let rows = |ev: &CorpusEval| -> Vec<EvalRow> {
            tracks
                .iter()
                .zip(&ev.per_track)
                .map(|((id, _, _), r)| EvalRow::new(id.clone(), r))
                .collect()
        };
        Ok(Self {
            tolerance_s,
            onset: rows(&onset),
            onset_summary: EvalRow::new("ALL", &onset.summary),
            histogram: rows(&hist),
            histogram_summary: EvalRow::new("ALL", &hist.summary),
        })
    }

    /// Comma-separated table: onset columns, then histogram columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "track_id,precision,recall,f_score,matched,ref_count,est_count,\
             hist_precision,hist_recall,hist_f_score,hist_matched\n",
        );
        let rows = self
            .onset
            .iter()
            .zip(&self.histogram)
            .chain(std::iter::once((&self.onset_summary, &self.histogram_summary)));
        for (o, h) in rows {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{},{},{},{:.6},{:.6},{:.6},{}",
                o.track_id,
                o.precision,
                o.recall,
                o.f_score,
                o.matched,
                o.ref_count,
                o.est_count,
                h.precision,
                h.recall,
                h.f_score,
                h.matched
            );
        }
        out
    }
}

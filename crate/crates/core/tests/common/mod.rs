//! Brute-force references shared by the integration tests.
#![allow(dead_code)]

use countem::events::{EventTrack, NoteEvent};

/// Local peaks of a column by direct comparison with every frame within `radius`.
pub fn naive_peaks(column: &[f32], radius: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for t in 0..column.len() {
        let mut ok = true;
        for s in 0..column.len() {
            if s != t && s.abs_diff(t) <= radius && column[s] > column[t] {
                ok = false;
            }
        }
        if ok {
            out.push(t);
        }
    }
    out
}

/// Frames chosen for one column: the `k` best local peaks by (value, -frame),
/// topped up from the remaining frames in the same order.
pub fn naive_pick(column: &[f32], k: usize, radius: usize) -> Vec<usize> {
    let key = |t: usize| (column[t], -(t as i64));
    let better = |a: &usize, b: &usize| key(*b).partial_cmp(&key(*a)).unwrap();
    let mut peaks = naive_peaks(column, radius);
    peaks.sort_by(better);
    let mut chosen: Vec<usize> = peaks.iter().copied().take(k).collect();
    if chosen.len() < k {
        let mut rest: Vec<usize> = (0..column.len()).filter(|t| !peaks.contains(t)).collect();
        rest.sort_by(better);
        chosen.extend(rest.into_iter().take(k - chosen.len()));
    }
    chosen.sort_unstable();
    chosen
}

/// Maximum pitch-respecting matching by exhaustive search over subsets of
/// estimates. Only for small inputs.
pub fn naive_matching(reference: &[NoteEvent], estimate: &[NoteEvent], tol_s: f64) -> usize {
    assert!(estimate.len() <= 16);
    fn go(i: usize, used: u32, r: &[NoteEvent], e: &[NoteEvent], tol: f64, memo: &mut Vec<Vec<Option<usize>>>) -> usize {
        if i == r.len() {
            return 0;
        }
        if let Some(v) = memo[i][used as usize] {
            return v;
        }
        let mut best = go(i + 1, used, r, e, tol, memo);
        for (j, est) in e.iter().enumerate() {
            if used & (1 << j) == 0 && est.pitch == r[i].pitch && (est.onset_s - r[i].onset_s).abs() <= tol {
                best = best.max(1 + go(i + 1, used | (1 << j), r, e, tol, memo));
            }
        }
        memo[i][used as usize] = Some(best);
        best
    }
    let mut memo = vec![vec![None; 1 << estimate.len()]; reference.len()];
    go(0, 0, reference, estimate, tol_s, &mut memo)
}

pub fn naive_histogram_matches(reference: &EventTrack, estimate: &EventTrack) -> usize {
    let mut total = 0;
    for p in 0..reference.pitch_count().max(estimate.pitch_count()) {
        let r = reference.events().iter().filter(|e| e.pitch == p).count();
        let e = estimate.events().iter().filter(|e| e.pitch == p).count();
        total += r.min(e);
    }
    total
}

/// Builds a track from `(onset, pitch)` pairs, dropping duplicates.
pub fn track_from(pairs: &[(f64, usize)], duration_s: f64, pitch_count: usize) -> EventTrack {
    let mut evs: Vec<NoteEvent> = Vec::new();
    for &(t, p) in pairs {
        if !evs.iter().any(|e| e.onset_s == t && e.pitch == p) {
            evs.push(NoteEvent::new(t, p));
        }
    }
    EventTrack::new(evs, duration_s, pitch_count).unwrap()
}

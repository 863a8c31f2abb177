//! The alternating loop: estimate frame labels from the current model and
//! the count histograms (peak picking, accepted only when the predicted
//! counts got closer), then retrain the model on the accepted labels.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{EventTrack, Histogram};
use crate::grid::{labels_to_events, FrameGrid, LabelMatrix, Posteriorgram};
use crate::metrics::{evaluate_corpus, EvalResult, Scoring, ONSET_TOLERANCE_S};
use crate::model::{LossConfig, TrackAudio, TrainConfig, TrainingSet, Transcriber};
use crate::peakpick::{peak_pick, predicted_histogram, squared_distance, threshold_peaks, PeakPickConfig};
use crate::seeding;

/// Fixed-threshold local-peak decoding, used when no histogram is available.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    pub threshold: f32,
    pub radius_frames: usize,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            radius_frames: 1,
        }
    }
}

impl ThresholdConfig {
    pub fn decode(&self, z: &Posteriorgram) -> Result<EventTrack> {
        Ok(labels_to_events(&threshold_peaks(z, self.threshold, self.radius_frames))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    pub max_iterations: usize,
    pub steps_per_m_step: usize,
    pub batch_frames: usize,
    /// Stop once the relative change of the summed distance falls below this.
    pub tol: f64,
    pub peakpick: PeakPickConfig,
    pub loss: LossConfig,
    /// Re-estimate labels every iteration; when false only the first
    /// iteration estimates labels and later ones just keep training.
    pub relabel_each_iteration: bool,
    /// Accept new labels only when the track distance strictly improves.
    pub gating: bool,
    pub decoder: ThresholdConfig,
    /// Include wall-clock seconds in reports (makes them non-reproducible).
    pub report_wall_time: bool,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5,
            steps_per_m_step: 300,
            batch_frames: 512,
            tol: 1e-3,
            peakpick: PeakPickConfig::default(),
            loss: LossConfig::default(),
            relabel_each_iteration: true,
            gating: true,
            decoder: ThresholdConfig::default(),
            report_wall_time: false,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Invalid("max_iterations must be at least 1".into()));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(Error::Invalid("tol must be non-negative".into()));
        }
        self.loss.validate()?;
        Ok(())
    }
}

/// Frame ranges `[start, end)` of each histogram window: starts are floored
/// to frames and the last window ends at the last frame.
pub fn snap_windows(histograms: &[Histogram], grid: &FrameGrid) -> Result<Vec<(usize, usize)>> {
    if histograms.is_empty() {
        return Err(Error::Invalid("no histogram windows".into()));
    }
    let mut starts = Vec::with_capacity(histograms.len());
    for h in histograms {
        if h.pitch_count() != grid.pitches() {
            return Err(Error::Invalid(format!(
                "histogram has {} pitches, grid has {}",
                h.pitch_count(),
                grid.pitches()
            )));
        }
        starts.push(grid.frame_of(h.window_start_s));
    }
    if starts[0] != 0 {
        return Err(Error::Invalid(format!(
            "first window starts at {} s, not at 0",
            histograms[0].window_start_s
        )));
    }
    for (w, pair) in histograms.windows(2).enumerate() {
        if (pair[0].window_end_s - pair[1].window_start_s).abs() > 1e-9 {
            return Err(Error::Invalid(format!("windows {w} and {} are not contiguous", w + 1)));
        }
    }
    let mut bounds = Vec::with_capacity(starts.len());
    for (w, &s) in starts.iter().enumerate() {
        let e = starts.get(w + 1).copied().unwrap_or(grid.frames());
        if e <= s || e > grid.frames() {
            return Err(Error::Invalid(format!(
                "window {w} [{}, {}) s covers no frames of a {}-frame grid",
                histograms[w].window_start_s,
                histograms[w].window_end_s,
                grid.frames()
            )));
        }
        bounds.push((s, e));
    }
    Ok(bounds)
}

/// A training track: audio features plus its count supervision, and
/// optionally a reference used only for reporting.
#[derive(Debug, Clone)]
pub struct EmTrack<'a> {
    pub audio: &'a TrackAudio,
    pub histograms: Vec<Histogram>,
    pub windows: Vec<(usize, usize)>,
    pub reference: Option<&'a EventTrack>,
}

impl<'a> EmTrack<'a> {
    pub fn new(audio: &'a TrackAudio, histograms: Vec<Histogram>, reference: Option<&'a EventTrack>) -> Result<Self> {
        let pitches = histograms.first().map_or(0, |h| h.pitch_count());
        let grid = FrameGrid::new(crate::grid::DEFAULT_FRAME_LEN_S, audio.frames(), pitches)?;
        let windows = snap_windows(&histograms, &grid)?;
        Ok(Self {
            audio,
            histograms,
            windows,
            reference,
        })
    }
}

/// Current label estimate of a track and its distance; `labels` is `None`
/// exactly when the distance is infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct EmTrackState {
    pub labels: Option<LabelMatrix>,
    pub best_distance: f64,
}

impl Default for EmTrackState {
    fn default() -> Self {
        Self {
            labels: None,
            best_distance: f64::INFINITY,
        }
    }
}

/// Peak-picks each window of `z` with its histogram, concatenates the window
/// labels, and returns them with the distance over all windows.
pub fn estimate_labels(
    z: &Posteriorgram,
    histograms: &[Histogram],
    windows: &[(usize, usize)],
    cfg: &PeakPickConfig,
) -> Result<(LabelMatrix, f64)> {
    let mut labels = LabelMatrix::zeros(*z.grid());
    let mut sq = 0.0;
    for (h, &(s, e)) in histograms.iter().zip(windows) {
        if e > z.grid().frames() {
            return Err(Error::Invalid(format!(
                "window [{s}, {e}) exceeds {} frames",
                z.grid().frames()
            )));
        }
        let part = z.frames_slice(s, e)?;
        labels.write_frames(s, &peak_pick(&part, h, cfg)?);
        sq += squared_distance(&predicted_histogram(&part), h)?;
    }
    Ok((labels, sq.sqrt()))
}

/// One label-estimation step for one track. Returns whether the new labels
/// were accepted.
pub fn e_step<M: Transcriber>(
    model: &M,
    track: &EmTrack<'_>,
    state: &mut EmTrackState,
    cfg: &EmConfig,
) -> Result<bool> {
    let z = model.predict(track.audio.features.view())?;
    let (labels, d) = estimate_labels(&z, &track.histograms, &track.windows, &cfg.peakpick)?;
    if !cfg.gating || d < state.best_distance {
        state.labels = Some(labels);
        state.best_distance = d;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Trains on the given labels (and the transposed labels of any shifted
/// copies) and returns the loss trace.
pub fn m_step<M: Transcriber>(
    model: &mut M,
    audio: &[&TrackAudio],
    labels: &[LabelMatrix],
    steps: usize,
    cfg: &EmConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let set = TrainingSet::new(audio.iter().copied(), labels)?;
    let train_cfg = TrainConfig {
        steps,
        batch_frames: cfg.batch_frames,
        loss: cfg.loss,
        seed,
    };
    Ok(model.fit(&set, &train_cfg)?)
}

/// A held-out track with a reference, used only for reporting.
#[derive(Debug, Clone, Copy)]
pub struct EvalTrack<'a> {
    pub audio: &'a TrackAudio,
    pub reference: &'a EventTrack,
}

/// Micro-averaged onset score of threshold-decoded predictions.
pub fn evaluate_model<M: Transcriber + Sync>(
    model: &M,
    tracks: &[EvalTrack<'_>],
    decoder: &ThresholdConfig,
) -> Result<EvalResult> {
    let estimates = tracks
        .par_iter()
        .map(|t| decoder.decode(&model.predict(t.audio.features.view())?))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<_> = tracks.iter().map(|t| t.reference).zip(&estimates).collect();
    Ok(evaluate_corpus(&pairs, Scoring::Onset { tol_s: ONSET_TOLERANCE_S })?.summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    /// Sum over tracks of the best distance so far.
    pub sum_dist: f64,
    pub relabeled_fraction: f64,
    /// Training steps run in this iteration.
    pub steps: usize,
    pub mean_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_f: Option<f64>,
    /// Score of the accepted labels against the references.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EmOutcome<M> {
    pub model: M,
    pub labels: Vec<LabelMatrix>,
    pub states: Vec<EmTrackState>,
    pub reports: Vec<IterationReport>,
    pub total_steps: usize,
}

fn score_labels(tracks: &[EmTrack<'_>], states: &[EmTrackState]) -> Result<Option<f64>> {
    let mut estimates = Vec::with_capacity(tracks.len());
    let mut refs = Vec::with_capacity(tracks.len());
    for (t, s) in tracks.iter().zip(states) {
        let (Some(r), Some(y)) = (t.reference, &s.labels) else {
            return Ok(None);
        };
        refs.push(r);
        estimates.push(labels_to_events(y)?);
    }
    let pairs: Vec<_> = refs.into_iter().zip(&estimates).collect();
    Ok(Some(
        evaluate_corpus(&pairs, Scoring::Onset { tol_s: ONSET_TOLERANCE_S })?.summary.f_score,
    ))
}

/// Runs the loop from a pre-trained model until the summed distance
/// converges or `max_iterations` is reached.
pub fn run_countem<M: Transcriber + Sync>(
    mut model: M,
    tracks: &[EmTrack<'_>],
    test: &[EvalTrack<'_>],
    cfg: &EmConfig,
) -> Result<EmOutcome<M>> {
    cfg.validate()?;
    if tracks.is_empty() {
        return Err(Error::Invalid("empty training corpus".into()));
    }
    let mut states = vec![EmTrackState::default(); tracks.len()];
    let mut reports = Vec::new();
    let mut prev_sum: Option<f64> = None;
    let mut total_steps = 0;
    let eval_train: Option<Vec<EvalTrack>> = tracks
        .iter()
        .map(|t| t.reference.map(|r| EvalTrack { audio: t.audio, reference: r }))
        .collect();

    for iteration in 1..=cfg.max_iterations {
        let started = Instant::now();
        let relabel = iteration == 1 || cfg.relabel_each_iteration;
        let mut relabeled = 0;
        if relabel {
            let accepted = tracks
                .par_iter()
                .zip(states.par_iter_mut())
                .map(|(t, s)| e_step(&model, t, s, cfg))
                .collect::<Result<Vec<bool>>>()?;
            relabeled = accepted.iter().filter(|&&a| a).count();
        }
        let sum_dist: f64 = states.iter().map(|s| s.best_distance).sum();

        let audio: Vec<&TrackAudio> = tracks.iter().map(|t| t.audio).collect();
        let labels: Vec<LabelMatrix> = states
            .iter()
            .map(|s| s.labels.clone().expect("every track is labelled after the first E-step"))
            .collect();
        let seed = seeding::derive_seed(&[cfg.seed, iteration as u64]);
        let trace = m_step(&mut model, &audio, &labels, cfg.steps_per_m_step, cfg, seed)?;
        total_steps += trace.len();

        let report = IterationReport {
            iteration,
            sum_dist,
            relabeled_fraction: relabeled as f64 / tracks.len() as f64,
            steps: trace.len(),
            mean_loss: if trace.is_empty() {
                0.0
            } else {
                trace.iter().sum::<f64>() / trace.len() as f64
            },
            train_f: match &eval_train {
                Some(e) => Some(evaluate_model(&model, e, &cfg.decoder)?.f_score),
                None => None,
            },
            test_f: if test.is_empty() {
                None
            } else {
                Some(evaluate_model(&model, test, &cfg.decoder)?.f_score)
            },
            label_f: score_labels(tracks, &states)?,
            wall_time_s: cfg.report_wall_time.then(|| started.elapsed().as_secs_f64()),
        };
        log::info!(
            "iteration {iteration}: sum_dist {:.3}, relabeled {:.2}, test_f {:?}",
            report.sum_dist,
            report.relabeled_fraction,
            report.test_f
        );
        reports.push(report);

        if relabel && cfg.relabel_each_iteration {
            if let Some(prev) = prev_sum {
                let change = (prev - sum_dist).abs() / prev.abs().max(f64::MIN_POSITIVE);
                if change < cfg.tol {
                    break;
                }
            }
            prev_sum = Some(sum_dist);
        }
    }

    let labels = states.iter().map(|s| s.labels.clone().unwrap()).collect();
    Ok(EmOutcome {
        model,
        labels,
        states,
        reports,
        total_steps,
    })
}

/// Trains on ground-truth labels for `steps` steps: the fully supervised
/// reference point.
pub fn supervised_baseline<M: Transcriber>(
    mut model: M,
    audio: &[&TrackAudio],
    labels: &[LabelMatrix],
    steps: usize,
    cfg: &EmConfig,
) -> Result<(M, Vec<f64>)> {
    let trace = m_step(&mut model, audio, labels, steps, cfg, seeding::derive_seed(&[cfg.seed, 1]))?;
    Ok((model, trace))
}

//! Synthetic corpora: three splits of random scores, rendered with one
//! timbre for pre-training and another for the target domain.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::events::EventTrack;
use crate::grid::{events_to_labels, FrameGrid, LabelMatrix, DEFAULT_FRAME_LEN_S};
use crate::model::{AugmentConfig, ShiftedCopy, TrackAudio};
use crate::seeding;
use crate::synth::{
    gen_score, pitch_shift_render, render_audio, FeatureConfig, Features, ScoreGenConfig,
    TimbreConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Pretrain,
    Train,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Pretrain, Split::Train, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Pretrain => "pretrain",
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Split::Pretrain => 1,
            Split::Train => 2,
            Split::Test => 3,
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub pretrain_tracks: usize,
    pub train_tracks: usize,
    pub test_tracks: usize,
    /// Score settings shared by all splits; the per-track seed is derived.
    pub score: ScoreGenConfig,
    /// Pre-training timbre.
    pub timbre_a: TimbreConfig,
    /// Target-domain timbre, used for the train and test splits.
    pub timbre_b: TimbreConfig,
    pub features: FeatureConfig,
    /// Shifted copies rendered for each train-split track.
    pub augment: AugmentConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            pretrain_tracks: 100,
            train_tracks: 100,
            test_tracks: 20,
            score: ScoreGenConfig::default(),
            timbre_a: TimbreConfig::domain_a(),
            timbre_b: TimbreConfig::domain_b(),
            features: FeatureConfig::default(),
            augment: AugmentConfig::default(),
        }
    }
}

impl CorpusConfig {
    pub fn tracks(&self, split: Split) -> usize {
        match split {
            Split::Pretrain => self.pretrain_tracks,
            Split::Train => self.train_tracks,
            Split::Test => self.test_tracks,
        }
    }

    pub fn timbre(&self, split: Split) -> &TimbreConfig {
        match split {
            Split::Pretrain => &self.timbre_a,
            Split::Train | Split::Test => &self.timbre_b,
        }
    }
}

pub fn track_id(split: Split, index: usize) -> String {
    format!("{}-{index:04}", split.name())
}

/// Seed of one track; splits never share seeds.
pub fn track_seed(seed: u64, split: Split, index: usize) -> u64 {
    seeding::derive_seed(&[seed, split.tag(), index as u64])
}

const NOISE: u64 = 1;
const SHIFT_NOISE: u64 = 2;
const SHIFTS: u64 = 3;

pub fn gen_track_score(cfg: &CorpusConfig, seed: u64, split: Split, index: usize) -> Result<EventTrack> {
    let score = ScoreGenConfig {
        seed: track_seed(seed, split, index),
        ..cfg.score.clone()
    };
    Ok(gen_score(&score)?)
}

/// Rounds samples to 16-bit PCM, so in-memory features equal features
/// computed from written WAV files.
pub fn quantize_pcm16(samples: &mut [f32]) {
    for s in samples {
        let q = (s.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16;
        *s = q as f32 / i16::MAX as f32;
    }
}

pub fn frame_grid(track: &EventTrack) -> Result<FrameGrid> {
    Ok(FrameGrid::covering(DEFAULT_FRAME_LEN_S, track.duration_s(), track.pitch_count())?)
}

/// Rendered waveform of a track, already quantized.
pub fn render_track(cfg: &CorpusConfig, seed: u64, split: Split, index: usize, track: &EventTrack) -> Result<Vec<f32>> {
    let noise_seed = seeding::derive_seed(&[track_seed(seed, split, index), NOISE]);
    let mut samples = render_audio(track, cfg.timbre(split), noise_seed)?.samples;
    quantize_pcm16(&mut samples);
    Ok(samples)
}

/// Shifts and quantized waveforms of the augmentation copies of one track.
pub fn render_shifted(
    cfg: &CorpusConfig,
    seed: u64,
    split: Split,
    index: usize,
    track: &EventTrack,
) -> Result<Vec<(f64, Vec<f32>)>> {
    let base = track_seed(seed, split, index);
    cfg.augment
        .shifts(seeding::derive_seed(&[base, SHIFTS]))
        .into_iter()
        .enumerate()
        .map(|(k, shift)| {
            let noise_seed = seeding::derive_seed(&[base, SHIFT_NOISE, k as u64]);
            let (r, _) = pitch_shift_render(track, cfg.timbre(split), shift, noise_seed)?;
            let mut samples = r.samples;
            quantize_pcm16(&mut samples);
            Ok((shift, samples))
        })
        .collect()
}

/// A track ready for training or evaluation.
#[derive(Debug, Clone)]
pub struct PreparedTrack {
    pub split: Split,
    pub events: EventTrack,
    pub labels: LabelMatrix,
    pub audio: TrackAudio,
}

pub fn featurize(features: &Features, samples: &[f32], grid: &FrameGrid) -> Result<Array2<f32>> {
    Ok(features.extract(samples, grid.frames())?)
}

pub fn prepare_track(
    cfg: &CorpusConfig,
    seed: u64,
    split: Split,
    index: usize,
    events: EventTrack,
    augment: bool,
) -> Result<PreparedTrack> {
    let extractor = Features::new(&cfg.features)?;
    let grid = frame_grid(&events)?;
    let labels = events_to_labels(&events, grid)?.labels;
    let samples = render_track(cfg, seed, split, index, &events)?;
    let features = featurize(&extractor, &samples, &grid)?;
    let copies = if augment {
        render_shifted(cfg, seed, split, index, &events)?
            .into_iter()
            .map(|(shift, s)| {
                Ok(ShiftedCopy {
                    shift_semitones: shift,
                    features: featurize(&extractor, &s, &grid)?,
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(PreparedTrack {
        split,
        events,
        labels,
        audio: TrackAudio {
            track_id: track_id(split, index),
            features,
            copies,
        },
    })
}

/// Generates, renders and featurizes a whole split. Shifted copies are only
/// rendered for the train split when `augment` is set.
pub fn prepare_split(cfg: &CorpusConfig, seed: u64, split: Split, augment: bool) -> Result<Vec<PreparedTrack>> {
    (0..cfg.tracks(split))
        .into_par_iter()
        .map(|i| {
            let events = gen_track_score(cfg, seed, split, i)?;
            prepare_track(cfg, seed, split, i, events, augment && split == Split::Train)
        })
        .collect()
}

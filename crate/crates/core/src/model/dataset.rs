//! Training examples: feature matrices paired with frame targets, including
//! pitch-shifted copies whose targets are derived by transposition.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::grid::LabelMatrix;
use crate::seeding;

/// How many shifted copies to render per training track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub copies: usize,
    /// Integer shifts are drawn from `-max_shift..=max_shift`.
    pub max_shift: i32,
    /// Uniform detuning added to the audio shift only.
    pub fractional: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            copies: 11,
            max_shift: 5,
            fractional: 0.1,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let range = 2 * self.max_shift + 1;
        if self.max_shift < 0 || self.copies > range as usize {
            return Err(ModelError::InvalidConfig(format!(
                "{} copies requested from {range} integer shifts",
                self.copies
            )));
        }
        if !(0.0..0.5).contains(&self.fractional) {
            return Err(ModelError::InvalidConfig("fractional shift must be in [0, 0.5)".into()));
        }
        Ok(())
    }

    /// Shifts in semitones for one track: distinct integers plus a small
    /// random fraction each.
    pub fn shifts(&self, seed: u64) -> Vec<f64> {
        let mut rng = seeding::rng_for(&[seed]);
        let mut ints: Vec<i32> = (-self.max_shift..=self.max_shift).collect();
        if self.copies < ints.len() {
            ints.shuffle(&mut rng);
            ints.truncate(self.copies);
            ints.sort_unstable();
        }
        ints.into_iter()
            .map(|s| {
                let frac = if self.fractional > 0.0 {
                    rng.random_range(-self.fractional..=self.fractional)
                } else {
                    0.0
                };
                s as f64 + frac
            })
            .collect()
    }
}

/// Features of a pitch-shifted rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedCopy {
    pub shift_semitones: f64,
    pub features: Array2<f32>,
}

impl ShiftedCopy {
    /// Label transposition that matches this copy.
    pub fn label_shift(&self) -> i32 {
        self.shift_semitones.round() as i32
    }
}

/// Features of one track and its shifted copies. Targets are supplied
/// separately so they can change between training rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackAudio {
    pub track_id: String,
    pub features: Array2<f32>,
    pub copies: Vec<ShiftedCopy>,
}

impl TrackAudio {
    pub fn frames(&self) -> usize {
        self.features.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct TrainingItem<'a> {
    pub track: usize,
    /// 0 for the original rendering.
    pub shift_semitones: f64,
    pub features: ArrayView2<'a, f32>,
    pub targets: LabelMatrix,
}

/// Every (features, targets) pair used by one training round.
#[derive(Debug, Clone)]
pub struct TrainingSet<'a> {
    items: Vec<TrainingItem<'a>>,
}

impl<'a> TrainingSet<'a> {
    /// Pairs each track with its labels; each shifted copy gets the labels
    /// transposed by the rounded shift, so copies can never drift out of
    /// sync with the original targets.
    pub fn new<I>(tracks: I, labels: &[LabelMatrix]) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = &'a TrackAudio>,
    {
        let tracks: Vec<&'a TrackAudio> = tracks.into_iter().collect();
        if tracks.len() != labels.len() {
            return Err(ModelError::ShapeMismatch {
                what: "label list",
                expected: (tracks.len(), 1),
                found: (labels.len(), 1),
            });
        }
        let mut items = Vec::new();
        for (i, (&track, y)) in tracks.iter().zip(labels).enumerate() {
            let expected = (track.frames(), y.grid().pitches());
            if y.values().dim() != expected {
                return Err(ModelError::ShapeMismatch {
                    what: "labels",
                    expected,
                    found: y.values().dim(),
                });
            }
            items.push(TrainingItem {
                track: i,
                shift_semitones: 0.0,
                features: track.features.view(),
                targets: y.clone(),
            });
            for copy in &track.copies {
                if copy.features.nrows() != track.frames() {
                    return Err(ModelError::ShapeMismatch {
                        what: "shifted features",
                        expected: track.features.dim(),
                        found: copy.features.dim(),
                    });
                }
                items.push(TrainingItem {
                    track: i,
                    shift_semitones: copy.shift_semitones,
                    features: copy.features.view(),
                    targets: y.transpose(copy.label_shift())?,
                });
            }
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[TrainingItem<'a>] {
        &self.items
    }

    pub fn total_frames(&self) -> usize {
        self.items.iter().map(|i| i.features.nrows()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total_frames() == 0
    }
}

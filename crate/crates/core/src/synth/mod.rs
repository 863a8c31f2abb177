//! Synthetic corpora: random scores, additive rendering, spectral features,
//! and oracle posteriorgrams.

mod features;
mod oracle;
mod render;
mod score;
mod wav;

use thiserror::Error;

pub use features::{extract_features, FeatureConfig, Features};
pub use oracle::oracle_posteriorgram;
pub use render::{
    midi_frequency, pitch_shift_render, render_audio, render_mix, Rendered, TimbreConfig,
    MAX_SHIFT_SEMITONES,
};
pub use score::{gen_score, ArpeggioOrder, ScoreGenConfig, ARPEGGIO_GAP_S, MIN_SAME_PITCH_GAP_S};
pub use wav::{encode_wav, read_wav, write_wav};

use crate::events::EventError;
use crate::grid::GridError;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("infeasible score config: {0}")]
    Infeasible(String),
    #[error("pitch shift {0} outside [-5.1, 5.1] semitones")]
    ShiftOutOfRange(f64),
    #[error("waveform has {len} samples, need at least {window}")]
    WaveformTooShort { len: usize, window: usize },
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("unsupported wav layout: {0}")]
    WavLayout(String),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

//! Time × pitch matrices on a uniform frame grid.
//!
//! Frame `t` covers `[t·frame_len_s, (t+1)·frame_len_s)`. Rows are frames,
//! columns are pitches.

mod matrix_io;

use ndarray::{s, Array2, ArrayView2, Axis};
use thiserror::Error;

use crate::events::{EventError, EventTrack, NoteEvent};

pub use matrix_io::{
    decode_matrix, encode_matrix, read_matrix, write_matrix, MatrixFile, MatrixFormatError,
};

/// Default frame length in seconds.
pub const DEFAULT_FRAME_LEN_S: f64 = 0.032;

/// Times this close (in frames) below a boundary are assigned to the next frame.
const BOUNDARY_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("frame length must be positive and finite, got {0}")]
    InvalidFrameLen(f64),
    #[error("grid dimensions must be positive, got {frames}x{pitches}")]
    EmptyGrid { frames: usize, pitches: usize },
    #[error("matrix shape {found:?} does not match grid {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("value {value} at ({frame}, {pitch}) outside [0, 1]")]
    ValueOutOfRange {
        frame: usize,
        pitch: usize,
        value: f32,
    },
    #[error("label value {value} at ({frame}, {pitch}) is not 0 or 1")]
    NotBinary { frame: usize, pitch: usize, value: u8 },
    #[error("onset {onset_s} s lies beyond the grid end {end_s} s")]
    OnsetBeyondGrid { onset_s: f64, end_s: f64 },
    #[error("track has {track} pitches, grid has {grid}")]
    PitchCountMismatch { track: usize, grid: usize },
    #[error("transposition by {shift} moves pitch {pitch} out of range")]
    TransposeOutOfRange { shift: i32, pitch: usize },
    #[error(transparent)]
    Event(#[from] EventError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameGrid {
    frame_len_s: f64,
    frames: usize,
    pitches: usize,
}

impl FrameGrid {
    pub fn new(frame_len_s: f64, frames: usize, pitches: usize) -> Result<Self, GridError> {
        if !(frame_len_s.is_finite() && frame_len_s > 0.0) {
            return Err(GridError::InvalidFrameLen(frame_len_s));
        }
        if frames == 0 || pitches == 0 {
            return Err(GridError::EmptyGrid { frames, pitches });
        }
        Ok(Self {
            frame_len_s,
            frames,
            pitches,
        })
    }

    /// Smallest grid covering `duration_s`.
    pub fn covering(frame_len_s: f64, duration_s: f64, pitches: usize) -> Result<Self, GridError> {
        let frames = (duration_s / frame_len_s - BOUNDARY_SLACK).ceil().max(1.0) as usize;
        Self::new(frame_len_s, frames, pitches)
    }

    pub fn frame_len_s(&self) -> f64 {
        self.frame_len_s
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn pitches(&self) -> usize {
        self.pitches
    }

    pub fn end_s(&self) -> f64 {
        self.frames as f64 * self.frame_len_s
    }

    /// Frame index containing time `t` (not bounds-checked).
    pub fn frame_of(&self, t: f64) -> usize {
        (t / self.frame_len_s + BOUNDARY_SLACK).floor().max(0.0) as usize
    }

    pub fn frame_center_s(&self, frame: usize) -> f64 {
        (frame as f64 + 0.5) * self.frame_len_s
    }

    fn check_shape(&self, shape: &[usize]) -> Result<(), GridError> {
        let found = (shape[0], shape[1]);
        let expected = (self.frames, self.pitches);
        if found != expected {
            return Err(GridError::ShapeMismatch { expected, found });
        }
        Ok(())
    }
}

/// Per-frame onset probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriorgram {
    grid: FrameGrid,
    values: Array2<f32>,
}

impl Posteriorgram {
    pub fn new(grid: FrameGrid, values: Array2<f32>) -> Result<Self, GridError> {
        grid.check_shape(values.shape())?;
        for ((frame, pitch), &value) in values.indexed_iter() {
            if !(0.0..=1.0).contains(&value) {
                return Err(GridError::ValueOutOfRange {
                    frame,
                    pitch,
                    value,
                });
            }
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: FrameGrid) -> Self {
        Self {
            values: Array2::zeros((grid.frames, grid.pitches)),
            grid,
        }
    }

    pub fn grid(&self) -> &FrameGrid {
        &self.grid
    }

    pub fn values(&self) -> ArrayView2<'_, f32> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f32> {
        self.values
    }

    /// Rows `[start, end)` as a posteriorgram on a shorter grid.
    pub fn frames_slice(&self, start: usize, end: usize) -> Result<Self, GridError> {
        let grid = FrameGrid::new(self.grid.frame_len_s, end - start, self.grid.pitches)?;
        Ok(Self {
            grid,
            values: self.values.slice(s![start..end, ..]).to_owned(),
        })
    }
}

/// Binary (multi-hot) onset labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    grid: FrameGrid,
    values: Array2<u8>,
}

impl LabelMatrix {
    pub fn new(grid: FrameGrid, values: Array2<u8>) -> Result<Self, GridError> {
        grid.check_shape(values.shape())?;
        for ((frame, pitch), &value) in values.indexed_iter() {
            if value > 1 {
                return Err(GridError::NotBinary {
                    frame,
                    pitch,
                    value,
                });
            }
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: FrameGrid) -> Self {
        Self {
            values: Array2::zeros((grid.frames, grid.pitches)),
            grid,
        }
    }

    pub fn grid(&self) -> &FrameGrid {
        &self.grid
    }

    pub fn values(&self) -> ArrayView2<'_, u8> {
        self.values.view()
    }

    pub fn get(&self, frame: usize, pitch: usize) -> bool {
        self.values[[frame, pitch]] == 1
    }

    pub fn set(&mut self, frame: usize, pitch: usize, on: bool) {
        self.values[[frame, pitch]] = on as u8;
    }

    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    /// Number of ones per pitch.
    pub fn column_sums(&self) -> Vec<u32> {
        self.values
            .axis_iter(Axis(1))
            .map(|col| col.iter().map(|&v| v as u32).sum())
            .collect()
    }

    /// Column sums restricted to frames `[start, end)`.
    pub fn column_sums_in(&self, start: usize, end: usize) -> Vec<u32> {
        self.values
            .slice(s![start..end, ..])
            .axis_iter(Axis(1))
            .map(|col| col.iter().map(|&v| v as u32).sum())
            .collect()
    }

    pub fn to_f32(&self) -> Array2<f32> {
        self.values.mapv(|v| v as f32)
    }

    /// Moves every one `shift` columns up (positive) or down.
    pub fn transpose(&self, shift: i32) -> Result<Self, GridError> {
        let mut out = Self::zeros(self.grid);
        for ((frame, pitch), &v) in self.values.indexed_iter() {
            if v == 0 {
                continue;
            }
            let q = pitch as i64 + shift as i64;
            if q < 0 || q >= self.grid.pitches as i64 {
                return Err(GridError::TransposeOutOfRange { shift, pitch });
            }
            out.values[[frame, q as usize]] = 1;
        }
        Ok(out)
    }

    /// Overwrites rows `[start, start + block.frames())` with `block`.
    pub fn write_frames(&mut self, start: usize, block: &LabelMatrix) {
        let end = start + block.grid.frames;
        self.values
            .slice_mut(s![start..end, ..])
            .assign(&block.values);
    }
}

/// Rasterized ground truth plus the number of onsets lost to same-frame collisions.
#[derive(Debug, Clone, PartialEq)]
pub struct Rasterized {
    pub labels: LabelMatrix,
    pub collapsed: usize,
}

pub fn events_to_labels(track: &EventTrack, grid: FrameGrid) -> Result<Rasterized, GridError> {
    if track.pitch_count() != grid.pitches {
        return Err(GridError::PitchCountMismatch {
            track: track.pitch_count(),
            grid: grid.pitches,
        });
    }
    let mut labels = LabelMatrix::zeros(grid);
    let mut collapsed = 0;
    for e in track.events() {
        let frame = grid.frame_of(e.onset_s);
        if frame >= grid.frames {
            return Err(GridError::OnsetBeyondGrid {
                onset_s: e.onset_s,
                end_s: grid.end_s(),
            });
        }
        if labels.get(frame, e.pitch) {
            collapsed += 1;
        } else {
            labels.set(frame, e.pitch, true);
        }
    }
    Ok(Rasterized { labels, collapsed })
}

/// One event per set entry, placed at the frame center.
pub fn labels_to_events(labels: &LabelMatrix) -> Result<EventTrack, GridError> {
    let grid = labels.grid;
    let events = labels
        .values
        .indexed_iter()
        .filter(|(_, &v)| v == 1)
        .map(|((frame, pitch), _)| NoteEvent::new(grid.frame_center_s(frame), pitch))
        .collect();
    Ok(EventTrack::new(events, grid.end_s(), grid.pitches)?)
}

//! Symbolic note events, counting windows and onset histograms.
//!
//! A track is a sorted list of note onsets. Histograms count onsets per pitch
//! inside non-overlapping, half-open windows `[start, end)` anchored at zero.

mod docs;
pub mod smf;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding;

pub use docs::{HistogramFile, WindowEntry};
pub use smf::{parse_smf, SmfError, SmfImport};

/// Number of pitches on a piano keyboard.
pub const DEFAULT_PITCH_COUNT: usize = 88;
/// MIDI note number of pitch index 0 (A0).
pub const LOWEST_MIDI_NOTE: u8 = 21;

#[derive(Debug, Error, PartialEq)]
pub enum EventError {
    #[error("onset {0} s is negative or not finite")]
    InvalidOnset(f64),
    #[error("pitch {pitch} outside [0, {pitch_count})")]
    PitchOutOfRange { pitch: usize, pitch_count: usize },
    #[error("duplicate event at {onset_s} s, pitch {pitch}")]
    DuplicateEvent { onset_s: f64, pitch: usize },
    #[error("onset {onset_s} s is not before track end {duration_s} s")]
    OnsetBeyondDuration { onset_s: f64, duration_s: f64 },
    #[error("track duration must be positive and finite, got {0}")]
    InvalidDuration(f64),
    #[error("pitch count must be positive")]
    ZeroPitchCount,
    #[error("window length must be positive and finite, got {0}")]
    InvalidWindow(f64),
    #[error("noise level {0} outside [0, 1)")]
    InvalidAlpha(f64),
    #[error("velocity {0} outside [1, 127]")]
    InvalidVelocity(u8),
}

/// A single note onset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub onset_s: f64,
    pub pitch: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<u8>,
}

impl NoteEvent {
    pub fn new(onset_s: f64, pitch: usize) -> Self {
        Self {
            onset_s,
            pitch,
            velocity: None,
        }
    }

    pub fn with_velocity(mut self, velocity: u8) -> Self {
        self.velocity = Some(velocity);
        self
    }

    fn order_key(&self, other: &Self) -> std::cmp::Ordering {
        self.onset_s
            .total_cmp(&other.onset_s)
            .then(self.pitch.cmp(&other.pitch))
    }
}

/// Note onsets of one recording, sorted by `(onset_s, pitch)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "docs::EventTrackDoc", into = "docs::EventTrackDoc")]
pub struct EventTrack {
    events: Vec<NoteEvent>,
    duration_s: f64,
    pitch_count: usize,
}

impl EventTrack {
    /// Sorts `events` and validates every invariant of a track.
    pub fn new(
        mut events: Vec<NoteEvent>,
        duration_s: f64,
        pitch_count: usize,
    ) -> Result<Self, EventError> {
        if !(duration_s.is_finite() && duration_s > 0.0) {
            return Err(EventError::InvalidDuration(duration_s));
        }
        if pitch_count == 0 {
            return Err(EventError::ZeroPitchCount);
        }
        for e in &events {
            if !(e.onset_s.is_finite() && e.onset_s >= 0.0) {
                return Err(EventError::InvalidOnset(e.onset_s));
            }
            if e.pitch >= pitch_count {
                return Err(EventError::PitchOutOfRange {
                    pitch: e.pitch,
                    pitch_count,
                });
            }
            if e.onset_s >= duration_s {
                return Err(EventError::OnsetBeyondDuration {
                    onset_s: e.onset_s,
                    duration_s,
                });
            }
            if let Some(v) = e.velocity {
                if !(1..=127).contains(&v) {
                    return Err(EventError::InvalidVelocity(v));
                }
            }
        }
        events.sort_by(NoteEvent::order_key);
        if let Some(w) = events
            .windows(2)
            .find(|w| w[0].onset_s == w[1].onset_s && w[0].pitch == w[1].pitch)
        {
            return Err(EventError::DuplicateEvent {
                onset_s: w[1].onset_s,
                pitch: w[1].pitch,
            });
        }
        Ok(Self {
            events,
            duration_s,
            pitch_count,
        })
    }

    pub fn empty(duration_s: f64, pitch_count: usize) -> Result<Self, EventError> {
        Self::new(Vec::new(), duration_s, pitch_count)
    }

    pub fn events(&self) -> &[NoteEvent] {
        &self.events
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    pub fn pitch_count(&self) -> usize {
        self.pitch_count
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Onset count per pitch over the whole track.
    pub fn pitch_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.pitch_count];
        for e in &self.events {
            counts[e.pitch] += 1;
        }
        counts
    }

    /// Shifts every pitch by `semitones`; fails if any note leaves the range.
    pub fn transpose(&self, semitones: i32) -> Result<Self, EventError> {
        let events = self
            .events
            .iter()
            .map(|e| {
                let p = e.pitch as i64 + semitones as i64;
                if p < 0 || p >= self.pitch_count as i64 {
                    Err(EventError::PitchOutOfRange {
                        pitch: p.max(0) as usize,
                        pitch_count: self.pitch_count,
                    })
                } else {
                    Ok(NoteEvent {
                        pitch: p as usize,
                        ..*e
                    })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(events, self.duration_s, self.pitch_count)
    }
}

/// Length of the histogram counting window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowSpec {
    FullTrack,
    Seconds(f64),
}

impl WindowSpec {
    pub fn validate(&self) -> Result<(), EventError> {
        match *self {
            WindowSpec::FullTrack => Ok(()),
            WindowSpec::Seconds(s) if s.is_finite() && s > 0.0 => Ok(()),
            WindowSpec::Seconds(s) => Err(EventError::InvalidWindow(s)),
        }
    }
}

impl std::fmt::Display for WindowSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WindowSpec::FullTrack => write!(f, "full"),
            WindowSpec::Seconds(s) => write!(f, "{s}"),
        }
    }
}

impl std::str::FromStr for WindowSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("full") {
            return Ok(WindowSpec::FullTrack);
        }
        let secs: f64 = s
            .trim_end_matches('s')
            .parse()
            .map_err(|_| format!("expected seconds or \"full\", got {s:?}"))?;
        let spec = WindowSpec::Seconds(secs);
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

impl Serialize for WindowSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match *self {
            WindowSpec::FullTrack => serializer.serialize_str("full"),
            WindowSpec::Seconds(s) => serializer.serialize_f64(s),
        }
    }
}

impl<'de> Deserialize<'de> for WindowSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(s) => {
                let spec = WindowSpec::Seconds(s);
                spec.validate().map_err(serde::de::Error::custom)?;
                Ok(spec)
            }
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Bounds of one counting window, `[start_s, end_s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub index: usize,
    pub start_s: f64,
    pub end_s: f64,
}

/// A window together with the events whose onsets fall inside it.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    pub window: Window,
    pub events: &'a [NoteEvent],
}

/// Tiles `[0, duration_s)` with windows of the requested length.
pub fn windows(duration_s: f64, spec: WindowSpec) -> Result<Vec<Window>, EventError> {
    spec.validate()?;
    let len = match spec {
        WindowSpec::FullTrack => {
            return Ok(vec![Window {
                index: 0,
                start_s: 0.0,
                end_s: duration_s,
            }])
        }
        WindowSpec::Seconds(len) => len,
    };
    let mut out = Vec::new();
    let mut index = 0;
    loop {
        let start_s = index as f64 * len;
        if start_s >= duration_s && index > 0 {
            break;
        }
        let end_s = ((index + 1) as f64 * len).min(duration_s);
        out.push(Window {
            index,
            start_s,
            end_s,
        });
        index += 1;
    }
    Ok(out)
}

/// Splits a track into windows; every event lands in exactly one segment.
pub fn segment(track: &EventTrack, spec: WindowSpec) -> Result<Vec<Segment<'_>>, EventError> {
    let wins = windows(track.duration_s, spec)?;
    let events = track.events();
    let mut out = Vec::with_capacity(wins.len());
    let mut lo = 0;
    for (i, w) in wins.iter().enumerate() {
        let hi = if i + 1 == wins.len() {
            events.len()
        } else {
            lo + events[lo..].partition_point(|e| e.onset_s < w.end_s)
        };
        out.push(Segment {
            window: *w,
            events: &events[lo..hi],
        });
        lo = hi;
    }
    Ok(out)
}

/// Per-pitch onset counts for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub counts: Vec<u32>,
    pub window_start_s: f64,
    pub window_end_s: f64,
}

impl Histogram {
    pub fn pitch_count(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

pub fn compute_histograms(
    track: &EventTrack,
    spec: WindowSpec,
) -> Result<Vec<Histogram>, EventError> {
    Ok(segment(track, spec)?
        .into_iter()
        .map(|seg| {
            let mut counts = vec![0u32; track.pitch_count];
            for e in seg.events {
                counts[e.pitch] += 1;
            }
            Histogram {
                counts,
                window_start_s: seg.window.start_s,
                window_end_s: seg.window.end_s,
            }
        })
        .collect())
}

/// Multiplies each count by an independent `U[1-alpha, 1+alpha]` factor and
/// rounds to the nearest integer (ties away from zero).
///
/// The factor for pitch `p` is drawn from a stream seeded by
/// `(seed, p, window_index)`, so corrupting one window does not depend on any
/// other.
pub fn corrupt_histogram(
    h: &Histogram,
    alpha: f64,
    seed: u64,
    window_index: usize,
) -> Result<Histogram, EventError> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(EventError::InvalidAlpha(alpha));
    }
    if alpha == 0.0 {
        return Ok(h.clone());
    }
    let counts = h
        .counts
        .iter()
        .enumerate()
        .map(|(p, &c)| {
            let mut rng = seeding::rng_for(&[seed, p as u64, window_index as u64]);
            let u = 1.0 - alpha + 2.0 * alpha * rng.random::<f64>();
            (c as f64 * u).round().max(0.0) as u32
        })
        .collect();
    Ok(Histogram {
        counts,
        ..h.clone()
    })
}

/// Corrupts a window sequence, using each histogram's position as its window index.
pub fn corrupt_histograms(
    hs: &[Histogram],
    alpha: f64,
    seed: u64,
) -> Result<Vec<Histogram>, EventError> {
    hs.iter()
        .enumerate()
        .map(|(i, h)| corrupt_histogram(h, alpha, seed, i))
        .collect()
}

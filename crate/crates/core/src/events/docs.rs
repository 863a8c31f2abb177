use serde::{Deserialize, Serialize};

use super::{EventError, EventTrack, Histogram, NoteEvent, WindowSpec};

#[derive(Serialize, Deserialize)]
pub(super) struct EventTrackDoc {
    pitch_count: usize,
    duration_s: f64,
    events: Vec<NoteEvent>,
}

impl TryFrom<EventTrackDoc> for EventTrack {
    type Error = EventError;

    fn try_from(doc: EventTrackDoc) -> Result<Self, Self::Error> {
        EventTrack::new(doc.events, doc.duration_s, doc.pitch_count)
    }
}

impl From<EventTrack> for EventTrackDoc {
    fn from(t: EventTrack) -> Self {
        Self {
            pitch_count: t.pitch_count,
            duration_s: t.duration_s,
            events: t.events,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEntry {
    pub start_s: f64,
    pub end_s: f64,
    pub counts: Vec<u32>,
}

/// On-disk histogram document for one track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramFile {
    pub pitch_count: usize,
    pub window_len_s: WindowSpec,
    pub windows: Vec<WindowEntry>,
}

impl HistogramFile {
    pub fn new(pitch_count: usize, window_len_s: WindowSpec, hs: &[Histogram]) -> Self {
        Self {
            pitch_count,
            window_len_s,
            windows: hs
                .iter()
                .map(|h| WindowEntry {
                    start_s: h.window_start_s,
                    end_s: h.window_end_s,
                    counts: h.counts.clone(),
                })
                .collect(),
        }
    }

    /// Converts back to histograms, checking every window has `pitch_count` entries.
    pub fn histograms(&self) -> Result<Vec<Histogram>, String> {
        self.windows
            .iter()
            .enumerate()
            .map(|(i, w)| {
                if w.counts.len() != self.pitch_count {
                    return Err(format!(
                        "window {i} has {} counts, expected {}",
                        w.counts.len(),
                        self.pitch_count
                    ));
                }
                if !(w.start_s < w.end_s) {
                    return Err(format!("window {i} has start >= end"));
                }
                Ok(Histogram {
                    counts: w.counts.clone(),
                    window_start_s: w.start_s,
                    window_end_s: w.end_s,
                })
            })
            .collect()
    }
}

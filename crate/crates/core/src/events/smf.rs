//! Standard MIDI File (format 0 and 1) ingestion.
//!
//! Only note-on events with non-zero velocity survive; everything else is
//! parsed for structure and discarded. Tick positions are converted to
//! seconds through a tempo map merged across all tracks.

use thiserror::Error;

use super::{EventError, EventTrack, NoteEvent, DEFAULT_PITCH_COUNT, LOWEST_MIDI_NOTE};

const DEFAULT_US_PER_QUARTER: u32 = 500_000;
/// Silence appended after the last onset to form the track duration.
const TAIL_S: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum SmfError {
    #[error("offset {offset}: expected \"MThd\" chunk")]
    BadHeaderMagic { offset: usize },
    #[error("offset {offset}: header length {length}, expected 6")]
    BadHeaderLength { offset: usize, length: u32 },
    #[error("offset {offset}: unsupported SMF format {format}")]
    UnsupportedFormat { offset: usize, format: u16 },
    #[error("offset {offset}: format 0 file declares {tracks} tracks")]
    TrackCount { offset: usize, tracks: u16 },
    #[error("offset {offset}: invalid time division")]
    BadDivision { offset: usize },
    #[error("offset {offset}: unexpected end of data")]
    UnexpectedEof { offset: usize },
    #[error("offset {offset}: truncated variable-length quantity")]
    TruncatedVlq { offset: usize },
    #[error("offset {offset}: variable-length quantity longer than 4 bytes")]
    VlqTooLong { offset: usize },
    #[error("offset {offset}: data byte with no running status in effect")]
    RunningStatus { offset: usize },
    #[error("offset {offset}: status byte {status:#04x} not allowed in a track")]
    InvalidStatus { offset: usize, status: u8 },
    #[error("offset {offset}: data byte {byte:#04x} has the high bit set")]
    InvalidDataByte { offset: usize, byte: u8 },
    #[error("offset {offset}: set-tempo meta event with length {length}")]
    BadTempo { offset: usize, length: u32 },
    #[error("file contains no note-on events")]
    NoNotes,
    #[error(transparent)]
    Track(#[from] EventError),
}

impl SmfError {
    /// Byte offset of the failure, when it has one.
    pub fn offset(&self) -> Option<usize> {
        use SmfError::*;
        match *self {
            BadHeaderMagic { offset }
            | BadHeaderLength { offset, .. }
            | UnsupportedFormat { offset, .. }
            | TrackCount { offset, .. }
            | BadDivision { offset }
            | UnexpectedEof { offset }
            | TruncatedVlq { offset }
            | VlqTooLong { offset }
            | RunningStatus { offset }
            | InvalidStatus { offset, .. }
            | InvalidDataByte { offset, .. }
            | BadTempo { offset, .. } => Some(offset),
            NoNotes | Track(_) => None,
        }
    }
}

/// Result of parsing an SMF.
#[derive(Debug, Clone, PartialEq)]
pub struct SmfImport {
    pub track: EventTrack,
    /// Note-ons outside MIDI 21..=108.
    pub dropped_out_of_range: usize,
    /// Note-ons that repeated an existing `(onset, pitch)` pair.
    pub merged_duplicates: usize,
}

#[derive(Clone, Copy)]
enum Division {
    Metrical(u16),
    Timecode { frames_per_s: f64, ticks_per_frame: u8 },
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    end: usize,
}

impl<'a> Cursor<'a> {
    fn u8(&mut self) -> Result<u8, SmfError> {
        if self.pos >= self.end {
            return Err(SmfError::UnexpectedEof { offset: self.pos });
        }
        let b = self.bytes[self.pos];
        self.pos += 1;
        Ok(b)
    }

    fn data_byte(&mut self) -> Result<u8, SmfError> {
        let offset = self.pos;
        let b = self.u8()?;
        if b & 0x80 != 0 {
            return Err(SmfError::InvalidDataByte { offset, byte: b });
        }
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], SmfError> {
        if self.end - self.pos < n {
            return Err(SmfError::UnexpectedEof { offset: self.end });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16_be(&mut self) -> Result<u16, SmfError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32_be(&mut self) -> Result<u32, SmfError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32, SmfError> {
        let start = self.pos;
        let mut value = 0u32;
        for _ in 0..4 {
            if self.pos >= self.end {
                return Err(SmfError::TruncatedVlq { offset: start });
            }
            let b = self.bytes[self.pos];
            self.pos += 1;
            value = (value << 7) | (b & 0x7F) as u32;
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(SmfError::VlqTooLong { offset: start })
    }
}

#[derive(Default)]
struct TrackScan {
    notes: Vec<(u64, u8, u8)>,
    tempos: Vec<(u64, u32)>,
}

fn scan_track(bytes: &[u8], start: usize, end: usize) -> Result<TrackScan, SmfError> {
    let mut cur = Cursor {
        bytes,
        pos: start,
        end,
    };
    let mut scan = TrackScan::default();
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    while cur.pos < cur.end {
        tick += cur.vlq()? as u64;
        let status_offset = cur.pos;
        let first = cur.u8()?;
        match first {
            0xFF => {
                running = None;
                let kind = cur.u8()?;
                let len_offset = cur.pos;
                let len = cur.vlq()?;
                let data = cur.take(len as usize)?;
                match kind {
                    0x51 => {
                        if len != 3 {
                            return Err(SmfError::BadTempo {
                                offset: len_offset,
                                length: len,
                            });
                        }
                        let us = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        scan.tempos.push((tick, us));
                    }
                    0x2F => break,
                    _ => {}
                }
            }
            0xF0 | 0xF7 => {
                running = None;
                let len = cur.vlq()?;
                cur.take(len as usize)?;
            }
            0xF1..=0xFE => {
                return Err(SmfError::InvalidStatus {
                    offset: status_offset,
                    status: first,
                })
            }
            _ => {
                let (status, first_data) = if first & 0x80 != 0 {
                    running = Some(first);
                    (first, None)
                } else {
                    match running {
                        Some(s) => (s, Some(first)),
                        None => {
                            return Err(SmfError::RunningStatus {
                                offset: status_offset,
                            })
                        }
                    }
                };
                let d1 = match first_data {
                    Some(b) => b,
                    None => cur.data_byte()?,
                };
                let kind = status >> 4;
                let d2 = match kind {
                    0xC | 0xD => None,
                    _ => Some(cur.data_byte()?),
                };
                if kind == 0x9 {
                    if let Some(vel) = d2 {
                        if vel > 0 {
                            scan.notes.push((tick, d1, vel));
                        }
                    }
                }
            }
        }
    }
    Ok(scan)
}

/// Piecewise-linear tick → seconds conversion.
struct TempoMap {
    division: Division,
    /// (tick, seconds at tick, microseconds per quarter from tick on)
    segments: Vec<(u64, f64, u32)>,
}

impl TempoMap {
    fn new(division: Division, mut tempos: Vec<(u64, u32)>) -> Self {
        tempos.sort_by_key(|&(t, _)| t);
        let mut segments = vec![(0u64, 0.0f64, DEFAULT_US_PER_QUARTER)];
        if let Division::Metrical(ppq) = division {
            for (tick, us) in tempos {
                let &(t0, s0, us0) = segments.last().unwrap();
                let s = s0 + (tick - t0) as f64 * us0 as f64 / (1e6 * ppq as f64);
                if tick == t0 {
                    segments.last_mut().unwrap().2 = us;
                } else {
                    segments.push((tick, s, us));
                }
            }
        }
        Self { division, segments }
    }

    fn seconds(&self, tick: u64) -> f64 {
        match self.division {
            Division::Metrical(ppq) => {
                let i = self.segments.partition_point(|&(t, _, _)| t <= tick) - 1;
                let (t0, s0, us) = self.segments[i];
                s0 + (tick - t0) as f64 * us as f64 / (1e6 * ppq as f64)
            }
            Division::Timecode {
                frames_per_s,
                ticks_per_frame,
            } => tick as f64 / (frames_per_s * ticks_per_frame as f64),
        }
    }
}

/// Parses an SMF into an 88-key onset track.
pub fn parse_smf(bytes: &[u8]) -> Result<SmfImport, SmfError> {
    let mut cur = Cursor {
        bytes,
        pos: 0,
        end: bytes.len(),
    };
    if cur.take(4).map_err(|_| SmfError::BadHeaderMagic { offset: 0 })? != b"MThd" {
        return Err(SmfError::BadHeaderMagic { offset: 0 });
    }
    let length = cur.u32_be()?;
    if length != 6 {
        return Err(SmfError::BadHeaderLength { offset: 4, length });
    }
    let format = cur.u16_be()?;
    if format > 1 {
        return Err(SmfError::UnsupportedFormat { offset: 8, format });
    }
    let ntracks = cur.u16_be()?;
    if format == 0 && ntracks != 1 {
        return Err(SmfError::TrackCount {
            offset: 10,
            tracks: ntracks,
        });
    }
    let raw_div = cur.u16_be()?;
    let division = if raw_div & 0x8000 == 0 {
        if raw_div == 0 {
            return Err(SmfError::BadDivision { offset: 12 });
        }
        Division::Metrical(raw_div)
    } else {
        let fps = -((raw_div >> 8) as u8 as i8) as i32;
        let frames_per_s = match fps {
            24 | 25 | 30 => fps as f64,
            29 => 30_000.0 / 1001.0,
            _ => return Err(SmfError::BadDivision { offset: 12 }),
        };
        let ticks_per_frame = (raw_div & 0xFF) as u8;
        if ticks_per_frame == 0 {
            return Err(SmfError::BadDivision { offset: 13 });
        }
        Division::Timecode {
            frames_per_s,
            ticks_per_frame,
        }
    };

    let mut notes = Vec::new();
    let mut tempos = Vec::new();
    let mut seen_tracks = 0u16;
    while cur.pos < cur.end && seen_tracks < ntracks {
        let chunk_offset = cur.pos;
        let id = cur.take(4)?;
        let len = cur.u32_be()? as usize;
        let start = cur.pos;
        let end = start
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or(SmfError::UnexpectedEof {
                offset: chunk_offset + 4,
            })?;
        if id == b"MTrk" {
            let scan = scan_track(bytes, start, end)?;
            notes.extend(scan.notes);
            tempos.extend(scan.tempos);
            seen_tracks += 1;
        }
        cur.pos = end;
    }
    if seen_tracks < ntracks {
        return Err(SmfError::UnexpectedEof { offset: cur.pos });
    }
    if notes.is_empty() {
        return Err(SmfError::NoNotes);
    }

    let map = TempoMap::new(division, tempos);
    let hi = LOWEST_MIDI_NOTE as usize + DEFAULT_PITCH_COUNT;
    let mut dropped_out_of_range = 0;
    let mut events: Vec<NoteEvent> = Vec::with_capacity(notes.len());
    for (tick, key, vel) in notes {
        let key = key as usize;
        if key < LOWEST_MIDI_NOTE as usize || key >= hi {
            dropped_out_of_range += 1;
            continue;
        }
        events.push(NoteEvent::new(map.seconds(tick), key - LOWEST_MIDI_NOTE as usize).with_velocity(vel));
    }
    events.sort_by(|a, b| a.order_key(b));
    let before = events.len();
    events.dedup_by(|a, b| a.onset_s == b.onset_s && a.pitch == b.pitch);
    let merged_duplicates = before - events.len();

    let last = events.last().map_or(0.0, |e| e.onset_s);
    let track = EventTrack::new(events, last + TAIL_S, DEFAULT_PITCH_COUNT)?;
    Ok(SmfImport {
        track,
        dropped_out_of_range,
        merged_duplicates,
    })
}

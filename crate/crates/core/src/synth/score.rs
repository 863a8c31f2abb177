//! Random score sampling.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::events::{EventTrack, NoteEvent, DEFAULT_PITCH_COUNT};
use crate::seeding;

/// Minimum distance between two onsets of the same pitch.
pub const MIN_SAME_PITCH_GAP_S: f64 = 0.1;
/// Inter-onset spacing of arpeggiated chords.
pub const ARPEGGIO_GAP_S: (f64, f64) = (0.04, 0.12);
const LEAD_IN_S: f64 = 0.05;
const TAIL_S: f64 = 0.25;
const ORDER_STREAM: u64 = 0xA5_9E;

/// Order in which an arpeggiated chord's pitches are played.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ArpeggioOrder {
    Ascending,
    #[default]
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreGenConfig {
    pub track_len_s: f64,
    pub notes_per_s: f64,
    /// Largest chord size.
    pub polyphony: usize,
    /// Lowest pitch index, inclusive.
    pub pitch_lo: usize,
    /// Highest pitch index, inclusive.
    pub pitch_hi: usize,
    pub chord_prob: f64,
    pub arpeggio_prob: f64,
    pub arpeggio_order: ArpeggioOrder,
    /// Arpeggios never straddle a multiple of this length, so per-window
    /// counts do not depend on arpeggio order for windows that are
    /// multiples of it.
    pub phrase_len_s: f64,
    pub pitch_count: usize,
    pub seed: u64,
}

impl Default for ScoreGenConfig {
    fn default() -> Self {
        Self {
            track_len_s: 20.0,
            notes_per_s: 2.0,
            polyphony: 3,
            pitch_lo: 36,
            pitch_hi: 67,
            chord_prob: 0.3,
            arpeggio_prob: 0.0,
            arpeggio_order: ArpeggioOrder::Random,
            phrase_len_s: 2.0,
            pitch_count: DEFAULT_PITCH_COUNT,
            seed: 0,
        }
    }
}

impl ScoreGenConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: &str| Err(SynthError::InvalidConfig(msg.to_string()));
        if !(self.track_len_s.is_finite() && self.track_len_s > LEAD_IN_S + TAIL_S) {
            return bad("track_len_s too short");
        }
        if !(self.phrase_len_s.is_finite() && self.phrase_len_s > 0.0) {
            return bad("phrase_len_s must be positive");
        }
        if !(self.notes_per_s.is_finite() && self.notes_per_s > 0.0) {
            return bad("notes_per_s must be positive");
        }
        if self.polyphony == 0 {
            return bad("polyphony must be at least 1");
        }
        if self.pitch_lo > self.pitch_hi || self.pitch_hi >= self.pitch_count {
            return bad("pitch range must be non-empty and inside [0, pitch_count)");
        }
        let p = [self.chord_prob, self.arpeggio_prob];
        if p.iter().any(|x| !(0.0..=1.0).contains(x)) || p[0] + p[1] > 1.0 {
            return bad("chord_prob and arpeggio_prob must be probabilities summing to at most 1");
        }
        Ok(())
    }

    fn range_size(&self) -> usize {
        self.pitch_hi - self.pitch_lo + 1
    }

    fn max_chord(&self) -> usize {
        self.polyphony.min(self.range_size())
    }

    fn mean_notes_per_slot(&self) -> f64 {
        let k = self.max_chord();
        if k < 2 {
            return 1.0;
        }
        let mean_chord = (2 + k) as f64 / 2.0;
        1.0 + (self.chord_prob + self.arpeggio_prob) * (mean_chord - 1.0)
    }

    pub fn expected_notes(&self) -> f64 {
        self.notes_per_s * self.track_len_s
    }
}

/// Per-pitch occupied intervals, used to enforce the same-pitch gap.
struct Occupancy {
    busy: Vec<Vec<(f64, f64)>>,
}

impl Occupancy {
    fn free(&self, pitch: usize, lo: f64, hi: f64) -> bool {
        self.busy[pitch]
            .iter()
            .all(|&(a, b)| lo >= b + MIN_SAME_PITCH_GAP_S || hi <= a - MIN_SAME_PITCH_GAP_S)
    }

    fn mark(&mut self, pitch: usize, lo: f64, hi: f64) {
        self.busy[pitch].push((lo, hi));
    }
}

/// Samples a random score.
///
/// Onset slots arrive with jittered spacing; each slot is a single note, a
/// simultaneous chord, or an arpeggio (a chord played as a sequence with
/// 40–120 ms gaps). Arpeggio pitch order is drawn from a separate stream, so
/// configs differing only in [`ArpeggioOrder`] produce the same pitches at
/// the same set of times. An arpeggio that would cross a phrase boundary is
/// played as a block chord instead.
pub fn gen_score(cfg: &ScoreGenConfig) -> Result<EventTrack, SynthError> {
    cfg.validate()?;
    let capacity = cfg.range_size() as f64 / MIN_SAME_PITCH_GAP_S;
    if cfg.notes_per_s > 0.5 * capacity {
        return Err(SynthError::Infeasible(format!(
            "{} notes/s exceeds what {} pitches can hold at {} s spacing",
            cfg.notes_per_s,
            cfg.range_size(),
            MIN_SAME_PITCH_GAP_S
        )));
    }

    let mut rng = seeding::rng_for(&[cfg.seed]);
    let mut occ = Occupancy {
        busy: vec![Vec::new(); cfg.pitch_count],
    };
    let mut events = Vec::new();
    let gap = cfg.mean_notes_per_slot() / cfg.notes_per_s;
    let last_onset = cfg.track_len_s - TAIL_S;
    let mut t = LEAD_IN_S + gap * rng.random::<f64>();
    let mut slot = 0u64;
    let pitches: Vec<usize> = (cfg.pitch_lo..=cfg.pitch_hi).collect();

    while t < last_onset {
        let r: f64 = rng.random();
        let kind_chord = r < cfg.chord_prob;
        let mut kind_arp = !kind_chord && r < cfg.chord_prob + cfg.arpeggio_prob;
        let size = if (kind_chord || kind_arp) && cfg.max_chord() >= 2 {
            rng.random_range(2..=cfg.max_chord())
        } else {
            1
        };
        let mut times = vec![t];
        if kind_arp && size > 1 {
            for _ in 1..size {
                let prev = *times.last().unwrap();
                times.push(prev + rng.random_range(ARPEGGIO_GAP_S.0..=ARPEGGIO_GAP_S.1));
            }
        }
        let phrase = |x: f64| (x / cfg.phrase_len_s).floor();
        if kind_arp && phrase(times[0]) != phrase(*times.last().unwrap()) {
            kind_arp = false;
            times.truncate(1);
        }
        let (lo, hi) = (times[0], *times.last().unwrap());
        let mut available: Vec<usize> = pitches
            .iter()
            .copied()
            .filter(|&p| occ.free(p, lo, hi))
            .collect();
        available.shuffle(&mut rng);
        let mut chosen: Vec<usize> = available.into_iter().take(size).collect();
        let velocities: Vec<u8> = (0..chosen.len()).map(|_| rng.random_range(60..=110)).collect();

        if hi < last_onset && !chosen.is_empty() {
            chosen.sort_unstable();
            for &p in &chosen {
                occ.mark(p, lo, hi);
            }
            if kind_arp && cfg.arpeggio_order == ArpeggioOrder::Random {
                chosen.shuffle(&mut seeding::rng_for(&[cfg.seed, ORDER_STREAM, slot]));
            }
            for (i, &p) in chosen.iter().enumerate() {
                let onset = if kind_arp { times[i] } else { t };
                events.push(NoteEvent::new(onset, p).with_velocity(velocities[i]));
            }
        }
        slot += 1;
        t += gap * rng.random_range(0.5..1.5);
    }

    let expected = cfg.expected_notes();
    let n = events.len() as f64;
    // Half the expectation, widened for short tracks where a few chords
    // move the total a lot.
    let slack = (0.5 * expected).max(3.0 * expected.sqrt());
    if (n - expected).abs() > slack {
        return Err(SynthError::Infeasible(format!(
            "generated {n} notes, expected about {expected}"
        )));
    }
    Ok(EventTrack::new(events, cfg.track_len_s, cfg.pitch_count)?)
}

//! Additive harmonic rendering.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::events::{EventTrack, LOWEST_MIDI_NOTE};
use crate::seeding;

/// Largest accepted pitch shift, integer range plus the fractional jitter.
pub const MAX_SHIFT_SEMITONES: f64 = 5.1;
const PEAK_LEVEL: f64 = 0.9;
const DEFAULT_GAIN: f64 = 0.8;
const NOISE_STREAM: u64 = 0x4E_01;

/// Fundamental frequency of a pitch index in Hz.
pub fn midi_frequency(pitch: usize) -> f64 {
    let midi = pitch as f64 + LOWEST_MIDI_NOTE as f64;
    440.0 * 2f64.powf((midi - 69.0) / 12.0)
}

/// Harmonic spectrum and amplitude envelope of a synthetic instrument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimbreConfig {
    pub harmonics: usize,
    /// Harmonic `k` has amplitude `k^-harmonic_decay`.
    pub harmonic_decay: f64,
    /// Extra factor on even harmonics.
    pub even_harmonic_gain: f64,
    pub attack_ms: f64,
    /// Exponential decay rate after the attack, per second.
    pub decay_per_s: f64,
    /// Sounding length before the release ramp.
    pub note_len_s: f64,
    pub release_ms: f64,
    /// Amplitude of uniform noise added after normalization.
    pub noise_floor: f64,
    pub sample_rate: u32,
}

impl Default for TimbreConfig {
    fn default() -> Self {
        Self::domain_a()
    }
}

impl TimbreConfig {
    /// Bright, percussive: many harmonics, instant attack, fast decay.
    pub fn domain_a() -> Self {
        Self {
            harmonics: 8,
            harmonic_decay: 1.0,
            even_harmonic_gain: 1.0,
            attack_ms: 2.0,
            decay_per_s: 6.0,
            note_len_s: 0.6,
            release_ms: 30.0,
            noise_floor: 0.002,
            sample_rate: 16_000,
        }
    }

    /// Mellow, slow attack: few soft harmonics, weak even partials.
    pub fn domain_b() -> Self {
        Self {
            harmonics: 5,
            harmonic_decay: 2.0,
            even_harmonic_gain: 0.4,
            attack_ms: 25.0,
            decay_per_s: 1.5,
            note_len_s: 1.0,
            release_ms: 30.0,
            noise_floor: 0.004,
            sample_rate: 16_000,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: &str| Err(SynthError::InvalidConfig(msg.to_string()));
        if self.harmonics == 0 {
            return bad("harmonics must be at least 1");
        }
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive");
        }
        let finite_nonneg = [
            self.harmonic_decay,
            self.even_harmonic_gain,
            self.attack_ms,
            self.decay_per_s,
            self.release_ms,
            self.noise_floor,
        ];
        if finite_nonneg.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return bad("timbre parameters must be finite and non-negative");
        }
        if !(self.note_len_s.is_finite() && self.note_len_s > 0.0) {
            return bad("note_len_s must be positive");
        }
        if self.noise_floor >= 1.0 {
            return bad("noise_floor must be below 1");
        }
        Ok(())
    }

    fn amplitude(&self, k: usize) -> f64 {
        let a = (k as f64).powf(-self.harmonic_decay);
        if k % 2 == 0 {
            a * self.even_harmonic_gain
        } else {
            a
        }
    }

    fn envelope(&self) -> Vec<f64> {
        let sr = self.sample_rate as f64;
        let attack = self.attack_ms * 1e-3;
        let release = self.release_ms * 1e-3;
        let n = ((self.note_len_s + release) * sr).ceil() as usize;
        (0..n)
            .map(|i| {
                let tau = i as f64 / sr;
                let body = if tau < attack {
                    tau / attack
                } else {
                    (-(tau - attack) * self.decay_per_s).exp()
                };
                let tail = if tau > self.note_len_s && release > 0.0 {
                    (1.0 - (tau - self.note_len_s) / release).max(0.0)
                } else if tau > self.note_len_s {
                    0.0
                } else {
                    1.0
                };
                body * tail
            })
            .collect()
    }
}

/// Rendered waveform plus the number of harmonics dropped above Nyquist.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub samples: Vec<f32>,
    pub truncated_harmonics: usize,
}

fn sample_len(track: &EventTrack, sr: u32) -> usize {
    (track.duration_s() * sr as f64).ceil() as usize
}

fn mix(track: &EventTrack, timbre: &TimbreConfig, freq_scale: f64) -> (Vec<f64>, usize) {
    let sr = timbre.sample_rate as f64;
    let nyquist = sr / 2.0;
    let mut out = vec![0.0f64; sample_len(track, timbre.sample_rate)];
    let env = timbre.envelope();
    let mut truncated = 0;
    for ev in track.events() {
        let f0 = midi_frequency(ev.pitch) * freq_scale;
        let gain = ev.velocity.map_or(DEFAULT_GAIN, |v| v as f64 / 127.0);
        let start = (ev.onset_s * sr).ceil() as usize;
        if start >= out.len() {
            continue;
        }
        let len = env.len().min(out.len() - start);
        let lag = start as f64 / sr - ev.onset_s;
        for k in 1..=timbre.harmonics {
            let f = f0 * k as f64;
            if f >= nyquist {
                truncated += timbre.harmonics - k + 1;
                break;
            }
            let a = gain * timbre.amplitude(k);
            let w = 2.0 * std::f64::consts::PI * f / sr;
            let phase = 2.0 * std::f64::consts::PI * f * lag;
            // sin(phase + w n) via the Chebyshev recurrence
            let c = 2.0 * w.cos();
            let mut prev = (phase - w).sin();
            let mut cur = phase.sin();
            for (o, e) in out[start..start + len].iter_mut().zip(&env[..len]) {
                *o += a * e * cur;
                let next = c * cur - prev;
                prev = cur;
                cur = next;
            }
        }
    }
    (out, truncated)
}

/// Unnormalized sum of all notes, without noise.
pub fn render_mix(track: &EventTrack, timbre: &TimbreConfig) -> Result<(Vec<f64>, usize), SynthError> {
    timbre.validate()?;
    Ok(mix(track, timbre, 1.0))
}

fn finish(mix: Vec<f64>, truncated: usize, timbre: &TimbreConfig, noise_seed: u64) -> Rendered {
    let peak = mix.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = if peak > 0.0 { PEAK_LEVEL / peak } else { 0.0 };
    let mut rng = seeding::rng_for(&[noise_seed, NOISE_STREAM]);
    let nf = timbre.noise_floor;
    let samples = mix
        .into_iter()
        .map(|x| {
            let noise = if nf > 0.0 { rng.random_range(-nf..=nf) } else { 0.0 };
            (x * scale + noise).clamp(-1.0, 1.0) as f32
        })
        .collect();
    Rendered {
        samples,
        truncated_harmonics: truncated,
    }
}

/// Renders a track, peak-normalizes to 0.9 and adds the noise floor.
pub fn render_audio(
    track: &EventTrack,
    timbre: &TimbreConfig,
    noise_seed: u64,
) -> Result<Rendered, SynthError> {
    timbre.validate()?;
    let (m, truncated) = mix(track, timbre, 1.0);
    Ok(finish(m, truncated, timbre, noise_seed))
}

/// Renders with every fundamental scaled by `2^(shift/12)` and returns the
/// matching labels, transposed by `round(shift)`.
pub fn pitch_shift_render(
    track: &EventTrack,
    timbre: &TimbreConfig,
    shift_semitones: f64,
    noise_seed: u64,
) -> Result<(Rendered, EventTrack), SynthError> {
    if !(shift_semitones.is_finite() && shift_semitones.abs() <= MAX_SHIFT_SEMITONES) {
        return Err(SynthError::ShiftOutOfRange(shift_semitones));
    }
    timbre.validate()?;
    let transposed = track.transpose(shift_semitones.round() as i32)?;
    let (m, truncated) = mix(track, timbre, 2f64.powf(shift_semitones / 12.0));
    Ok((finish(m, truncated, timbre, noise_seed), transposed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::NoteEvent;

    fn quiet(t: TimbreConfig) -> TimbreConfig {
        TimbreConfig {
            noise_floor: 0.0,
            ..t
        }
    }

    fn track(events: Vec<NoteEvent>) -> EventTrack {
        EventTrack::new(events, 1.0, 88).unwrap()
    }

    fn dominant_frequency(x: &[f32], sr: f64) -> f64 {
        // plain DFT scan at 0.5 Hz resolution around the expected band
        let n = x.len().min(8192);
        let mut best = (0.0, 0.0);
        let mut f = 300.0;
        while f < 600.0 {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &v) in x[..n].iter().enumerate() {
                let ph = 2.0 * std::f64::consts::PI * f * i as f64 / sr;
                re += v as f64 * ph.cos();
                im += v as f64 * ph.sin();
            }
            let mag = re * re + im * im;
            if mag > best.1 {
                best = (f, mag);
            }
            f += 0.5;
        }
        best.0
    }

    #[test]
    fn a4_frequency() {
        assert_eq!(midi_frequency(48), 440.0);
    }

    #[test]
    fn empty_track_is_noise_only() {
        let t = track(vec![]);
        let r = render_audio(&t, &TimbreConfig::domain_a(), 1).unwrap();
        assert_eq!(r.samples.len(), 16_000);
        assert!(r.samples.iter().all(|x| x.abs() <= 0.002 + 1e-7));
        let silent = render_audio(&t, &quiet(TimbreConfig::domain_a()), 1).unwrap();
        assert!(silent.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn mixing_is_linear() {
        let timbre = TimbreConfig::domain_b();
        let a = track(vec![NoteEvent::new(0.1, 39)]);
        let b = track(vec![NoteEvent::new(0.1, 43)]);
        let ab = track(vec![NoteEvent::new(0.1, 39), NoteEvent::new(0.1, 43)]);
        let (ma, _) = render_mix(&a, &timbre).unwrap();
        let (mb, _) = render_mix(&b, &timbre).unwrap();
        let (mab, _) = render_mix(&ab, &timbre).unwrap();
        for i in 0..mab.len() {
            assert!((mab[i] - ma[i] - mb[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn peak_normalized() {
        let t = track(vec![NoteEvent::new(0.1, 39), NoteEvent::new(0.3, 50)]);
        let r = render_audio(&t, &quiet(TimbreConfig::domain_a()), 0).unwrap();
        let peak = r.samples.iter().fold(0f32, |m, x| m.max(x.abs()));
        assert!((peak - 0.9).abs() < 1e-6);
    }

    #[test]
    fn harmonics_above_nyquist_are_counted() {
        // MIDI 108 is about 4186 Hz: only harmonic 1 fits under 8 kHz
        let t = track(vec![NoteEvent::new(0.0, 87)]);
        let r = render_audio(&t, &TimbreConfig::domain_a(), 0).unwrap();
        assert_eq!(r.truncated_harmonics, 7);
    }

    #[test]
    fn shift_zero_is_identity() {
        let timbre = TimbreConfig::domain_a();
        let t = track(vec![NoteEvent::new(0.2, 40)]);
        let plain = render_audio(&t, &timbre, 3).unwrap();
        let (shifted, labels) = pitch_shift_render(&t, &timbre, 0.0, 3).unwrap();
        assert_eq!(plain, shifted);
        assert_eq!(labels, t);
    }

    #[test]
    fn shift_up_one_semitone() {
        let timbre = TimbreConfig {
            harmonics: 1,
            ..quiet(TimbreConfig::domain_b())
        };
        let t = track(vec![NoteEvent::new(0.0, 48)]);
        let (r, labels) = pitch_shift_render(&t, &timbre, 1.0, 0).unwrap();
        let f = dominant_frequency(&r.samples, 16_000.0);
        assert!((f - 466.16).abs() < 1.0, "peak at {f}");
        assert_eq!(labels.events()[0].pitch, 49);
        // fractional part moves audio only
        let (_, labels) = pitch_shift_render(&t, &timbre, 1.08, 0).unwrap();
        assert_eq!(labels.events()[0].pitch, 49);
    }

    #[test]
    fn shift_limits() {
        let t = track(vec![NoteEvent::new(0.0, 1)]);
        let timbre = TimbreConfig::domain_a();
        assert!(matches!(
            pitch_shift_render(&t, &timbre, 5.2, 0),
            Err(SynthError::ShiftOutOfRange(_))
        ));
        assert!(matches!(
            pitch_shift_render(&t, &timbre, -2.0, 0),
            Err(SynthError::Event(_))
        ));
    }
}

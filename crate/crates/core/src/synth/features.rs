//! Log-compressed triangular-band magnitude spectrogram.

use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::grid::DEFAULT_FRAME_LEN_S;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub window_samples: usize,
    pub hop_samples: usize,
    pub bands: usize,
    pub min_hz: f64,
    pub max_hz: f64,
    pub log_offset: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            window_samples: 1024,
            hop_samples: 512,
            bands: 96,
            min_hz: 30.0,
            max_hz: 8000.0,
            log_offset: 1e-3,
        }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::InvalidConfig(msg));
        if self.sample_rate == 0 || self.window_samples < 2 || self.bands == 0 {
            return bad("sample_rate, window_samples and bands must be positive".into());
        }
        let frame_len = self.hop_samples as f64 / self.sample_rate as f64;
        if (frame_len - DEFAULT_FRAME_LEN_S).abs() > 1e-12 {
            return bad(format!(
                "hop of {} samples at {} Hz is {frame_len} s, frames are {DEFAULT_FRAME_LEN_S} s",
                self.hop_samples, self.sample_rate
            ));
        }
        if !(self.min_hz >= 0.0 && self.min_hz < self.max_hz && self.max_hz <= self.sample_rate as f64 / 2.0) {
            return bad("band range must satisfy 0 <= min_hz < max_hz <= nyquist".into());
        }
        if !(self.log_offset.is_finite() && self.log_offset > 0.0) {
            return bad("log_offset must be positive".into());
        }
        Ok(())
    }

    /// `bands × (window/2 + 1)` weights; each triangle peaks at 1 on its center.
    pub fn filterbank(&self) -> Array2<f32> {
        let bins = self.window_samples / 2 + 1;
        let bin_hz = self.sample_rate as f64 / self.window_samples as f64;
        let (lo, hi) = (hz_to_mel(self.min_hz), hz_to_mel(self.max_hz));
        let edges: Vec<f64> = (0..self.bands + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (self.bands + 1) as f64))
            .collect();
        let mut fb = Array2::zeros((self.bands, bins));
        for b in 0..self.bands {
            let (l, c, r) = (edges[b], edges[b + 1], edges[b + 2]);
            let mut any = false;
            for k in 0..bins {
                let f = k as f64 * bin_hz;
                let w = if f > l && f <= c {
                    (f - l) / (c - l)
                } else if f > c && f < r {
                    (r - f) / (r - c)
                } else {
                    0.0
                };
                if w > 0.0 {
                    fb[[b, k]] = w as f32;
                    any = true;
                }
            }
            if !any {
                // band narrower than a bin: take the nearest bin
                let k = ((c / bin_hz).round() as usize).min(bins - 1);
                fb[[b, k]] = 1.0;
            }
        }
        fb
    }
}

/// Reusable STFT state for one config.
pub struct Features {
    cfg: FeatureConfig,
    window: Vec<f32>,
    filterbank: Array2<f32>,
    fft: Arc<dyn Fft<f32>>,
}

impl Features {
    pub fn new(cfg: &FeatureConfig) -> Result<Self, SynthError> {
        cfg.validate()?;
        let n = cfg.window_samples;
        let window: Vec<f32> = (0..n)
            .map(|i| (0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()) as f32)
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            window,
            filterbank: cfg.filterbank(),
            fft: FftPlanner::new().plan_fft_forward(n),
        })
    }

    /// `frames × bands` features; frame `t` analyses samples
    /// `[t·hop, t·hop + window)`, zero-padded past the end of the waveform.
    pub fn extract(&self, samples: &[f32], frames: usize) -> Result<Array2<f32>, SynthError> {
        let n = self.cfg.window_samples;
        if samples.len() < n {
            return Err(SynthError::WaveformTooShort {
                len: samples.len(),
                window: n,
            });
        }
        let bins = n / 2 + 1;
        let scale = 2.0 / self.window.iter().sum::<f32>();
        let offset = self.cfg.log_offset as f32;
        let mut out = Array2::zeros((frames, self.cfg.bands));
        let mut buf = vec![Complex::new(0.0f32, 0.0); n];
        let mut scratch = vec![Complex::new(0.0f32, 0.0); self.fft.get_inplace_scratch_len()];
        let mut mag = vec![0.0f32; bins];
        for t in 0..frames {
            let start = t * self.cfg.hop_samples;
            for (i, c) in buf.iter_mut().enumerate() {
                let x = samples.get(start + i).copied().unwrap_or(0.0);
                *c = Complex::new(x * self.window[i], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (m, c) in mag.iter_mut().zip(&buf[..bins]) {
                *m = c.norm() * scale;
            }
            for (b, row) in self.filterbank.rows().into_iter().enumerate() {
                let e: f32 = row.iter().zip(&mag).map(|(w, m)| w * m).sum();
                out[[t, b]] = (1.0 + e / offset).ln();
            }
        }
        Ok(out)
    }
}

pub fn extract_features(
    samples: &[f32],
    cfg: &FeatureConfig,
    frames: usize,
) -> Result<Array2<f32>, SynthError> {
    Features::new(cfg)?.extract(samples, frames)
}

//! Mono 16-bit PCM WAV files.

use std::io::Cursor;
use std::path::Path;

use super::SynthError;

fn spec(sample_rate: u32) -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

fn to_i16(x: f32) -> i16 {
    (x.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16
}

pub fn encode_wav(samples: &[f32], sample_rate: u32) -> Result<Vec<u8>, SynthError> {
    let mut buf = Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut buf, spec(sample_rate))?;
        let mut w16 = w.get_i16_writer(samples.len() as u32);
        for &s in samples {
            w16.write_sample(to_i16(s));
        }
        w16.flush()?;
        w.finalize()?;
    }
    Ok(buf.into_inner())
}

/// Writes atomically; samples are clipped to [-1, 1].
pub fn write_wav(path: &Path, samples: &[f32], sample_rate: u32) -> Result<(), SynthError> {
    let bytes = encode_wav(samples, sample_rate)?;
    crate::io::write_atomic(path, &bytes).map_err(|e| SynthError::Wav(hound::Error::IoError(e)))
}

/// Reads a mono 16-bit file as samples in [-1, 1] and its sample rate.
pub fn read_wav(path: &Path) -> Result<(Vec<f32>, u32), SynthError> {
    let mut r = hound::WavReader::open(path)?;
    let s = r.spec();
    if s.channels != 1 || s.bits_per_sample != 16 || s.sample_format != hound::SampleFormat::Int {
        return Err(SynthError::WavLayout(format!(
            "{} channels, {} bits, {:?}",
            s.channels, s.bits_per_sample, s.sample_format
        )));
    }
    let samples = r
        .samples::<i16>()
        .map(|x| x.map(|v| v as f32 / i16::MAX as f32))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((samples, s.sample_rate))
}

//! Posteriorgrams derived from known labels, for testing label estimation
//! independently of model quality.

use rand::Rng;

use super::SynthError;
use crate::grid::{LabelMatrix, Posteriorgram};
use crate::seeding;

/// Triangular blur of `labels` over `±blur_frames` (weight `1 - d/(blur+1)`,
/// overlapping kernels combined by max), plus `U[0, noise_eps]` noise,
/// clipped to [0, 1].
pub fn oracle_posteriorgram(
    labels: &LabelMatrix,
    blur_frames: usize,
    noise_eps: f64,
    seed: u64,
) -> Result<Posteriorgram, SynthError> {
    if !(0.0..1.0).contains(&noise_eps) {
        return Err(SynthError::InvalidConfig(format!(
            "noise_eps {noise_eps} outside [0, 1)"
        )));
    }
    let grid = *labels.grid();
    let (frames, pitches) = (grid.frames(), grid.pitches());
    let mut z = ndarray::Array2::<f32>::zeros((frames, pitches));
    let y = labels.values();
    for ((t, p), &on) in y.indexed_iter() {
        if on == 0 {
            continue;
        }
        let lo = t.saturating_sub(blur_frames);
        let hi = (t + blur_frames).min(frames - 1);
        for s in lo..=hi {
            let w = 1.0 - s.abs_diff(t) as f32 / (blur_frames + 1) as f32;
            let cell = &mut z[[s, p]];
            *cell = cell.max(w);
        }
    }
    if noise_eps > 0.0 {
        let mut rng = seeding::rng_for(&[seed]);
        let eps = noise_eps as f32;
        z.mapv_inplace(|v| (v + rng.random_range(0.0..=eps)).clamp(0.0, 1.0));
    }
    Ok(Posteriorgram::new(grid, z)?)
}

//! Mini-batch training over uniformly sampled frames.

use ndarray::{s, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_and_logit_grad, LossConfig};
use super::net;
use super::{ModelError, TrainingSet, TranscriberState};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    /// Frames per mini-batch (16 one-second segments by default).
    pub batch_frames: usize,
    pub loss: LossConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_frames: 512,
            loss: LossConfig::default(),
            seed: 0,
        }
    }
}

/// Runs `cfg.steps` Adam updates and returns the per-step loss.
pub fn train(
    state: &mut TranscriberState,
    data: &TrainingSet<'_>,
    cfg: &TrainConfig,
) -> Result<Vec<f64>, ModelError> {
    cfg.loss.validate()?;
    if cfg.steps == 0 {
        return Ok(Vec::new());
    }
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if cfg.batch_frames == 0 {
        return Err(ModelError::InvalidConfig("batch_frames must be positive".into()));
    }
    let arch = *state.architecture();
    for item in data.items() {
        if item.features.ncols() != arch.feature_width || item.targets.grid().pitches() != arch.pitches {
            return Err(ModelError::ShapeMismatch {
                what: "training item",
                expected: (arch.feature_width, arch.pitches),
                found: (item.features.ncols(), item.targets.grid().pitches()),
            });
        }
    }

    let mut ends = Vec::with_capacity(data.items().len());
    let mut total = 0;
    for item in data.items() {
        total += item.features.nrows();
        ends.push(total);
    }

    let width = arch.feature_width;
    let n = cfg.batch_frames;
    let c = arch.context as isize;
    let mut rng = seeding::rng_for(&[cfg.seed]);
    let mut x = Array2::<f32>::zeros((n, arch.input_width()));
    let mut y = Array2::<f32>::zeros((n, arch.pitches));
    let w = cfg.loss.positive_weight as f32;
    let mut trace = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        x.fill(0.0);
        for row in 0..n {
            let r = rng.random_range(0..total);
            let k = ends.partition_point(|&e| e <= r);
            let item = &data.items()[k];
            let t = r - (ends[k] - item.features.nrows());
            let frames = item.features.nrows() as isize;
            for j in -c..=c {
                let src = t as isize + j;
                if (0..frames).contains(&src) {
                    let col = ((j + c) as usize) * width;
                    x.slice_mut(s![row, col..col + width])
                        .assign(&item.features.row(src as usize));
                }
            }
            for (dst, &v) in y.row_mut(row).iter_mut().zip(item.targets.values().row(t)) {
                *dst = v as f32;
            }
        }
        let act = net::forward(&arch, state.params(), x.view());
        let (loss, dlogit) = loss_and_logit_grad(act.out.view(), y.view(), w);
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { step });
        }
        let grad = net::backward(&arch, state.params(), x.view(), &act, dlogit.view());
        state.adam_step(&grad)?;
        trace.push(loss);
    }
    Ok(trace)
}

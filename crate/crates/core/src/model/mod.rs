//! The per-frame transcriber: a one-hidden-layer network over a window of
//! feature frames, trained with positive-weighted BCE and Adam.

mod adam;
mod checkpoint;
mod dataset;
mod gradcheck;
mod loss;
pub(crate) mod net;
mod train;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointError};
pub use dataset::{AugmentConfig, ShiftedCopy, TrackAudio, TrainingItem, TrainingSet};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use loss::{weighted_bce, LossConfig, CLAMP};
pub use train::{train, TrainConfig};

use crate::grid::{FrameGrid, GridError, Posteriorgram, DEFAULT_FRAME_LEN_S};
use crate::seeding;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{what} shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("non-finite gradient at parameter {index}")]
    NonFiniteGradient { index: usize },
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Network dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Features per frame.
    pub feature_width: usize,
    /// Frames of context on each side.
    pub context: usize,
    pub hidden: usize,
    pub pitches: usize,
}

impl Architecture {
    pub fn input_width(&self) -> usize {
        (2 * self.context + 1) * self.feature_width
    }

    pub fn param_count(&self) -> usize {
        let (d, h, p) = (self.input_width(), self.hidden, self.pitches);
        d * h + h + h * p + p
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.feature_width == 0 || self.hidden == 0 || self.pitches == 0 {
            return Err(ModelError::InvalidConfig(format!("degenerate architecture {self:?}")));
        }
        Ok(())
    }
}

/// Settings used to build a fresh network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub context: usize,
    pub hidden: usize,
    /// Initial output bias; negative values start from a sparse-onset prior.
    pub output_bias: f64,
    pub optimizer: AdamConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            context: 2,
            hidden: 256,
            output_bias: -4.0,
            optimizer: AdamConfig::default(),
        }
    }
}

/// Something that maps features to posteriorgrams and can be trained on
/// frame labels.
pub trait Transcriber {
    fn predict(&self, features: ArrayView2<f32>) -> Result<Posteriorgram, ModelError>;
    fn fit(&mut self, data: &TrainingSet<'_>, cfg: &TrainConfig) -> Result<Vec<f64>, ModelError>;
}

/// Network parameters plus optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct TranscriberState {
    arch: Architecture,
    params: Vec<f32>,
    optimizer: AdamConfig,
    adam: AdamState,
}

const PREDICT_CHUNK: usize = 2048;

impl TranscriberState {
    /// All parameters zero: every output is exactly 0.5.
    pub fn zeros(arch: Architecture, optimizer: AdamConfig) -> Result<Self, ModelError> {
        arch.validate()?;
        optimizer.validate()?;
        let n = arch.param_count();
        Ok(Self {
            arch,
            params: vec![0.0; n],
            optimizer,
            adam: AdamState::zeros(n),
        })
    }

    /// Glorot-uniform weights, zero hidden bias, constant output bias.
    pub fn init(arch: Architecture, cfg: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        if !cfg.output_bias.is_finite() {
            return Err(ModelError::InvalidConfig("output_bias must be finite".into()));
        }
        let arch = Architecture {
            context: cfg.context,
            hidden: cfg.hidden,
            ..arch
        };
        let mut state = Self::zeros(arch, cfg.optimizer)?;
        let mut rng = seeding::rng_for(&[seed]);
        let [w1, b1, w2, b2] = arch.offsets();
        let (d, h, p) = (arch.input_width(), arch.hidden, arch.pitches);
        let a1 = (6.0 / (d + h) as f32).sqrt();
        let a2 = (6.0 / (h + p) as f32).sqrt();
        for v in &mut state.params[w1..b1] {
            *v = rng.random_range(-a1..a1);
        }
        for v in &mut state.params[w2..b2] {
            *v = rng.random_range(-a2..a2);
        }
        for v in &mut state.params[b2..] {
            *v = cfg.output_bias as f32;
        }
        Ok(state)
    }

    pub fn from_parts(
        arch: Architecture,
        params: Vec<f32>,
        optimizer: AdamConfig,
        adam: AdamState,
    ) -> Result<Self, ModelError> {
        arch.validate()?;
        optimizer.validate()?;
        let n = arch.param_count();
        for (what, len) in [("parameters", params.len()), ("first moment", adam.m.len()), ("second moment", adam.v.len())] {
            if len != n {
                return Err(ModelError::ShapeMismatch {
                    what,
                    expected: (n, 1),
                    found: (len, 1),
                });
            }
        }
        Ok(Self {
            arch,
            params,
            optimizer,
            adam,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn optimizer(&self) -> &AdamConfig {
        &self.optimizer
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    /// Replaces the optimizer hyperparameters, keeping moments.
    pub fn set_optimizer(&mut self, optimizer: AdamConfig) -> Result<(), ModelError> {
        optimizer.validate()?;
        self.optimizer = optimizer;
        Ok(())
    }

    /// Applies one Adam update with `grad`.
    pub fn adam_step(&mut self, grad: &[f32]) -> Result<(), ModelError> {
        self.adam.update(&self.optimizer, &mut self.params, grad)
    }

    fn check_features(&self, features: ArrayView2<f32>) -> Result<(), ModelError> {
        if features.ncols() != self.arch.feature_width {
            return Err(ModelError::ShapeMismatch {
                what: "features",
                expected: (features.nrows(), self.arch.feature_width),
                found: features.dim(),
            });
        }
        if features.nrows() == 0 {
            return Err(ModelError::Grid(GridError::EmptyGrid {
                frames: 0,
                pitches: self.arch.pitches,
            }));
        }
        Ok(())
    }

    /// `T × P` onset probabilities, one row per feature frame. Each row
    /// depends only on its own context window.
    pub fn predict(&self, features: ArrayView2<f32>) -> Result<Posteriorgram, ModelError> {
        self.check_features(features)?;
        let frames = features.nrows();
        let mut out = Array2::<f32>::zeros((frames, self.arch.pitches));
        let mut start = 0;
        while start < frames {
            let end = (start + PREDICT_CHUNK).min(frames);
            let x = net::context_rows(features, start..end, self.arch.context, |v| v);
            let act = net::forward(&self.arch, &self.params, x.view());
            out.slice_mut(ndarray::s![start..end, ..]).assign(&act.out);
            start = end;
        }
        let grid = FrameGrid::new(DEFAULT_FRAME_LEN_S, frames, self.arch.pitches)?;
        Ok(Posteriorgram::new(grid, out)?)
    }
}

impl Transcriber for TranscriberState {
    fn predict(&self, features: ArrayView2<f32>) -> Result<Posteriorgram, ModelError> {
        TranscriberState::predict(self, features)
    }

    fn fit(&mut self, data: &TrainingSet<'_>, cfg: &TrainConfig) -> Result<Vec<f64>, ModelError> {
        train(self, data, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch() -> Architecture {
        Architecture {
            feature_width: 4,
            context: 2,
            hidden: 6,
            pitches: 3,
        }
    }

    #[test]
    fn zero_parameters_give_one_half() {
        let s = TranscriberState::zeros(arch(), AdamConfig::default()).unwrap();
        let f = Array2::from_shape_fn((7, 4), |(t, k)| (t * k) as f32);
        let z = s.predict(f.view()).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn identical_frames_identical_rows() {
        let s = TranscriberState::init(arch(), &ModelConfig { hidden: 6, ..Default::default() }, 1).unwrap();
        let f = Array2::from_elem((9, 4), 0.7f32);
        let z = s.predict(f.view()).unwrap();
        // rows away from the zero-padded edges see identical context
        for t in 3..6 {
            assert_eq!(z.values().row(t), z.values().row(2));
        }
        assert!(z.values().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn chunking_does_not_change_output() {
        let s = TranscriberState::init(arch(), &ModelConfig { hidden: 6, ..Default::default() }, 2).unwrap();
        let f = Array2::from_shape_fn((PREDICT_CHUNK + 5, 4), |(t, k)| ((t * 7 + k) % 11) as f32 / 11.0);
        let whole = s.predict(f.view()).unwrap();
        let tail = s.predict(f.slice(ndarray::s![PREDICT_CHUNK - 10.., ..])).unwrap();
        for i in 3..tail.values().nrows() - 2 {
            assert_eq!(tail.values().row(i), whole.values().row(PREDICT_CHUNK - 10 + i));
        }
    }

    #[test]
    fn feature_width_checked() {
        let s = TranscriberState::zeros(arch(), AdamConfig::default()).unwrap();
        let f = Array2::<f32>::zeros((5, 3));
        assert!(matches!(s.predict(f.view()), Err(ModelError::ShapeMismatch { .. })));
    }
}

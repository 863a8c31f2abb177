//! Finite-difference verification of the analytic gradient.

use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;

use super::loss::{loss_and_logit_grad, LossConfig, CLAMP};
use super::net::{self, Activations};
use super::{ModelError, TranscriberState};
use crate::grid::LabelMatrix;
use crate::seeding;

/// Denominator floor so that gradients which are zero on both sides count
/// as agreement rather than 0/0.
const RELATIVE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub probes: usize,
    pub loss: LossConfig,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            probes: 64,
            loss: LossConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Probes compared.
    pub probes: usize,
    /// Probes whose perturbation crossed a ReLU kink or the output clamp,
    /// where the function is not differentiable.
    pub skipped: usize,
}

fn pattern(act: &Activations<f64>) -> (Vec<bool>, Vec<bool>) {
    let relu = act.pre.iter().map(|&v| v > 0.0).collect();
    let clamp = act.out.iter().map(|&z| (CLAMP..=1.0 - CLAMP).contains(&z)).collect();
    (relu, clamp)
}

/// Compares backpropagated gradients (in `f64`) of the full-track loss
/// against central differences on randomly chosen parameters.
pub fn grad_check(
    state: &TranscriberState,
    features: ArrayView2<f32>,
    labels: &LabelMatrix,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport, ModelError> {
    cfg.loss.validate()?;
    let arch = *state.architecture();
    let frames = features.nrows();
    if features.ncols() != arch.feature_width {
        return Err(ModelError::ShapeMismatch {
            what: "features",
            expected: (frames, arch.feature_width),
            found: features.dim(),
        });
    }
    if labels.values().dim() != (frames, arch.pitches) {
        return Err(ModelError::ShapeMismatch {
            what: "labels",
            expected: (frames, arch.pitches),
            found: labels.values().dim(),
        });
    }
    let x = net::context_rows(features, 0..frames, arch.context, |v| v as f64);
    let y: Array2<f64> = labels.values().mapv(|v| v as f64);
    let w = cfg.loss.positive_weight;
    let mut params: Vec<f64> = state.params().iter().map(|&v| v as f64).collect();

    let base = net::forward(&arch, &params, x.view());
    let (_, dlogit) = loss_and_logit_grad(base.out.view(), y.view(), w);
    let analytic = net::backward(&arch, &params, x.view(), &base, dlogit.view());
    let base_pattern = pattern(&base);

    let eval = |params: &[f64]| {
        let act = net::forward(&arch, params, x.view());
        let (loss, _) = loss_and_logit_grad(act.out.view(), y.view(), w);
        (loss, pattern(&act))
    };

    let n = params.len();
    let mut rng = seeding::rng_for(&[cfg.seed]);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        probes: 0,
        skipped: 0,
    };
    for i in sample(&mut rng, n, cfg.probes.min(n)) {
        let orig = params[i];
        params[i] = orig + cfg.step;
        let (up, up_pattern) = eval(&params);
        params[i] = orig - cfg.step;
        let (down, down_pattern) = eval(&params);
        params[i] = orig;
        if up_pattern != base_pattern || down_pattern != base_pattern {
            report.skipped += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * cfg.step);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
        report.max_relative_error = report.max_relative_error.max(rel);
        report.probes += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FrameGrid;
    use crate::model::{AdamConfig, Architecture, ModelConfig};
    use rand::Rng;

    fn instance(seed: u64) -> (TranscriberState, Array2<f32>, LabelMatrix) {
        let mut rng = seeding::rng_for(&[seed, 1]);
        let (frames, pitches, width) = (8, 5, 4);
        let arch = Architecture {
            feature_width: width,
            context: 2,
            hidden: 7,
            pitches,
        };
        let cfg = ModelConfig {
            hidden: 7,
            output_bias: 0.0,
            ..Default::default()
        };
        let state = TranscriberState::init(arch, &cfg, seed).unwrap();
        let features = Array2::from_shape_fn((frames, width), |_| rng.random_range(-1.0..1.0f32));
        let mut y = LabelMatrix::zeros(FrameGrid::new(0.032, frames, pitches).unwrap());
        for t in 0..frames {
            for p in 0..pitches {
                y.set(t, p, rng.random_bool(0.3));
            }
        }
        (state, features, y)
    }

    #[test]
    fn random_instances_agree() {
        for seed in 0..5 {
            let (s, f, y) = instance(seed);
            let r = grad_check(&s, f.view(), &y, &GradCheckConfig { seed, ..Default::default() }).unwrap();
            assert!(r.max_relative_error <= 1e-4, "{r:?}");
            assert!(r.probes > 32, "{r:?}");
        }
    }

    #[test]
    fn zero_instance_is_finite() {
        let arch = Architecture {
            feature_width: 3,
            context: 2,
            hidden: 4,
            pitches: 2,
        };
        let s = TranscriberState::zeros(arch, AdamConfig::default()).unwrap();
        let f = Array2::zeros((6, 3));
        let y = LabelMatrix::zeros(FrameGrid::new(0.032, 6, 2).unwrap());
        let r = grad_check(&s, f.view(), &y, &GradCheckConfig::default()).unwrap();
        assert!(r.max_relative_error.is_finite());
    }
}

//! Positive-weighted binary cross-entropy.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use super::net::Scalar;
use super::ModelError;
use crate::grid::{LabelMatrix, Posteriorgram};

/// Outputs are clamped to `[CLAMP, 1 - CLAMP]` before taking logs.
pub const CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Mask weight on positive labels, `M = w·Y + (1 − Y)`.
    pub positive_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            positive_weight: 2.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.positive_weight.is_finite() && self.positive_weight >= 1.0) {
            return Err(ModelError::InvalidConfig(format!(
                "positive_weight {} must be at least 1",
                self.positive_weight
            )));
        }
        Ok(())
    }
}

/// Mean masked BCE over all cells, and its gradient with respect to the
/// logits. Cells whose output was clamped get zero gradient.
pub(crate) fn loss_and_logit_grad<T: Scalar>(
    out: ArrayView2<T>,
    targets: ArrayView2<T>,
    positive_weight: T,
) -> (f64, Array2<T>) {
    let delta = T::from(CLAMP).unwrap();
    let one = T::one();
    let n = T::from(out.len()).unwrap();
    let mut total = 0.0f64;
    let mut grad = Array2::zeros(out.dim());
    Zip::from(&mut grad)
        .and(&out)
        .and(&targets)
        .for_each(|g, &z, &y| {
            let mask = if y > T::zero() { positive_weight } else { one };
            let zc = z.max(delta).min(one - delta);
            let bce = -(y * zc.ln() + (one - y) * (one - zc).ln());
            total += (mask * bce).to_f64().unwrap();
            if zc == z {
                *g = mask * (z - y) / n;
            }
        });
    (total / out.len() as f64, grad)
}

/// Loss of a posteriorgram against labels, normalized by `T·P`, and
/// `dLoss/dZ` (zero where `Z` was clamped).
pub fn weighted_bce(
    z: &Posteriorgram,
    y: &LabelMatrix,
    cfg: &LossConfig,
) -> Result<(f64, Array2<f32>), ModelError> {
    cfg.validate()?;
    if z.values().dim() != y.values().dim() {
        return Err(ModelError::ShapeMismatch {
            what: "labels",
            expected: z.values().dim(),
            found: y.values().dim(),
        });
    }
    let n = z.values().len() as f64;
    let delta = CLAMP;
    let mut total = 0.0;
    let mut grad = Array2::zeros(z.values().dim());
    Zip::from(&mut grad)
        .and(z.values())
        .and(y.values())
        .for_each(|g: &mut f32, &zv, &yv| {
            let zf = zv as f64;
            let zc = zf.clamp(delta, 1.0 - delta);
            let (mask, bce, dz) = if yv == 1 {
                (cfg.positive_weight, -zc.ln(), -1.0 / zc)
            } else {
                (1.0, -(1.0 - zc).ln(), 1.0 / (1.0 - zc))
            };
            total += mask * bce;
            if zc == zf {
                *g = (mask * dz / n) as f32;
            }
        });
    Ok((total / n, grad))
}

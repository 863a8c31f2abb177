//! Bias-corrected Adam on a flat parameter vector.

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = self.learning_rate.is_finite()
            && self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon.is_finite()
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidConfig(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// First and second moment estimates plus the number of updates taken.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub step: u64,
}

impl AdamState {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    /// One update of `params` in place. A non-finite gradient leaves
    /// everything untouched and returns an error.
    pub fn update(&mut self, cfg: &AdamConfig, params: &mut [f32], grad: &[f32]) -> Result<(), ModelError> {
        if grad.len() != params.len() || self.m.len() != params.len() {
            return Err(ModelError::ShapeMismatch {
                what: "gradient",
                expected: (params.len(), 1),
                found: (grad.len(), 1),
            });
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(ModelError::NonFiniteGradient { index: i });
        }
        self.step += 1;
        let t = self.step as f64;
        let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
        let c1 = (1.0 - cfg.beta1.powf(t)) as f32;
        let c2 = (1.0 - cfg.beta2.powf(t)) as f32;
        let lr = cfg.learning_rate as f32;
        let eps = cfg.epsilon as f32;
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut p = vec![0.5, -1.0];
        let mut s = AdamState::zeros(2);
        s.update(&AdamConfig::default(), &mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![0.5, -1.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn constant_gradient_steps_by_learning_rate() {
        let cfg = AdamConfig::default();
        let mut p = vec![0.0f32; 3];
        let g = [0.3f32, -2.0, 1e-3];
        let mut s = AdamState::zeros(3);
        let mut before = p.clone();
        for _ in 0..1000 {
            before.copy_from_slice(&p);
            s.update(&cfg, &mut p, &g).unwrap();
        }
        for i in 0..3 {
            let step = (p[i] - before[i]).abs() as f64;
            assert!((step - cfg.learning_rate).abs() <= 0.01 * cfg.learning_rate, "{step}");
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = vec![1.0f32, 2.0];
        let mut s = AdamState::zeros(2);
        let err = s.update(&AdamConfig::default(), &mut p, &[0.1, f32::NAN]);
        assert!(matches!(err, Err(ModelError::NonFiniteGradient { index: 1 })));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(s.step, 0);
    }

    #[test]
    fn deterministic() {
        let cfg = AdamConfig::default();
        let run = || {
            let mut p = vec![0.1f32, 0.2, 0.3];
            let mut s = AdamState::zeros(3);
            for k in 0..10 {
                s.update(&cfg, &mut p, &[k as f32, -0.5, 0.25]).unwrap();
            }
            (p, s)
        };
        assert_eq!(run(), run());
    }
}

//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid Adam hyperparameters {self:?}")))
        }
    }
}

/// First/second moment estimates for a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct AdamState<T: Scalar = f32> {
    config: AdamConfig,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &[Tensor<T>]) -> Result<Self> {
        config.validate()?;
        let zeros = |p: &Tensor<T>| Tensor::zeros(p.shape());
        Ok(AdamState {
            config,
            first: params.iter().map(zeros).collect::<Result<_>>()?,
            second: params.iter().map(zeros).collect::<Result<_>>()?,
            step: 0,
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// Number of completed steps.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. A non-finite gradient anywhere rejects the whole
    /// step and leaves parameters and state untouched.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::shape(
                "adam_step",
                format!(
                    "optimizer tracks {} tensors, got {} params and {} grads",
                    self.first.len(),
                    params.len(),
                    grads.len()
                ),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.first[i].shape() || g.shape() != p.shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!("parameter {i}: {} / gradient {} / state {}", p.shape(), g.shape(), self.first[i].shape()),
                ));
            }
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient { index: i });
            }
        }

        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let lr_t = c.lr * (1.0 - c.beta2.powi(t)).sqrt() / (1.0 - c.beta1.powi(t));
        let eps_t = c.epsilon * (1.0 - c.beta2.powi(t)).sqrt();
        let (b1, b2) = (T::from_f64_lossy(c.beta1), T::from_f64_lossy(c.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let (lr_t, eps_t) = (T::from_f64_lossy(lr_t), T::from_f64_lossy(eps_t));

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = b1 * *mv + one_b1 * gv;
                *vv = b2 * *vv + one_b2 * gv * gv;
                // lr·m̂/(√v̂+ε) rewritten with the bias corrections folded into
                // the step size and epsilon.
                *pv -= lr_t * *mv / (vv.sqrt() + eps_t);
            }
        }
        Ok(())
    }
}

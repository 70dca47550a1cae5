use serde::{Deserialize, Serialize};

use super::params::{Grads, ParamSet};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adaptive-moment optimizer state for one [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: ParamSet,
    pub v: ParamSet,
    pub t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        let zero = |tag: &str| {
            let mut s = ParamSet::new(tag);
            for (n, t) in params.iter() {
                s.add(n, Tensor::zeros(t.shape()));
            }
            s
        };
        Self { config, m: zero("adam.m"), v: zero("adam.v"), t: 0 }
    }

    /// One bias-corrected update, `theta -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Grads) -> Result<()> {
        if grads.0.len() != params.len() {
            return Err(Error::Schema(format!("{} grads for {} params", grads.0.len(), params.len())));
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (i, g) in grads.0.iter().enumerate() {
            let p = &mut params.tensors_mut()[i];
            g.same_shape("adam", p)?;
            let m = self.m.tensors_mut()[i].data_mut();
            let v = self.v.tensors_mut()[i].data_mut();
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Moments flattened for checkpointing; the step count rides along as `prefix.t`.
    pub fn export(&self, prefix: &str, out: &mut ParamSet) {
        out.extend_prefixed(&format!("{prefix}.m"), &self.m);
        out.extend_prefixed(&format!("{prefix}.v"), &self.v);
        out.add(format!("{prefix}.t"), Tensor::row(vec![self.t as f64]));
    }

    pub fn import(&mut self, prefix: &str, from: &ParamSet) -> Result<()> {
        self.m = from.extract_prefixed(&format!("{prefix}.m"), &self.m)?;
        self.v = from.extract_prefixed(&format!("{prefix}.v"), &self.v)?;
        let t = from.find(&format!("{prefix}.t")).ok_or_else(|| Error::Schema(format!("missing {prefix}.t")))?;
        self.t = t.data()[0] as u64;
        Ok(())
    }
}

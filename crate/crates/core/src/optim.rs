use serde::{Deserialize, Serialize};

use crate::error::{OcanError, Result};
use crate::params::ParamGroup;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments for one [`ParamGroup`].
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParamGroup, config: AdamConfig) -> Self {
        let zeros = || {
            params
                .values()
                .iter()
                .map(|v| Tensor::zeros(v.rows(), v.cols()))
                .collect()
        };
        Self {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update from the accumulated gradients.
    /// Gradients are left in place.
    pub fn step(&mut self, params: &mut ParamGroup) -> Result<()> {
        if params.len() != self.first.len() || params.grads().len() != params.len() {
            return Err(OcanError::StateMismatch(format!(
                "{} moment tensors for {} parameters",
                self.first.len(),
                params.len()
            )));
        }
        for (i, m) in self.first.iter().enumerate() {
            if m.shape() != params.value_at(i).shape() {
                return Err(OcanError::StateMismatch(format!(
                    "parameter {} has shape {:?}, moments {:?}",
                    params.names()[i],
                    params.value_at(i).shape(),
                    m.shape()
                )));
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);

        for i in 0..params.len() {
            let grad = params.grads()[i].clone();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let p = params.value_mut(i).data_mut();
            for (((pj, mj), vj), &gj) in p
                .iter_mut()
                .zip(m.iter_mut())
                .zip(v.iter_mut())
                .zip(grad.data())
            {
                *mj = beta1 * *mj + (1.0 - beta1) * gj;
                *vj = beta2 * *vj + (1.0 - beta2) * gj * gj;
                let m_hat = *mj / c1;
                let v_hat = *vj / c2;
                *pj -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
            if !p.iter().all(|x| x.is_finite()) {
                return Err(OcanError::NonFinite { op: "adam_step" });
            }
        }
        Ok(())
    }
}

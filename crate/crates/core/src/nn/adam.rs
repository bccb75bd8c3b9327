//! Bias-corrected Adam over named parameter blocks.

use crate::error::CoreError;
use crate::Result;

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub hyper: AdamHyper,
    pub step: u64,
    /// (block name, first moment, second moment), in block order.
    moments: Vec<(String, Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    /// Zero-initialized moments for the given block layout.
    pub fn new(hyper: AdamHyper, blocks: &[(String, usize)]) -> Self {
        AdamState {
            hyper,
            step: 0,
            moments: blocks
                .iter()
                .map(|(name, len)| (name.clone(), vec![0.0; *len], vec![0.0; *len]))
                .collect(),
        }
    }

    pub fn moments(&self) -> &[(String, Vec<f64>, Vec<f64>)] {
        &self.moments
    }

    /// Restore moments from a checkpoint. Layout must match.
    pub fn restore(
        hyper: AdamHyper,
        step: u64,
        moments: Vec<(String, Vec<f64>, Vec<f64>)>,
    ) -> Self {
        AdamState {
            hyper,
            step,
            moments,
        }
    }

    /// One Adam update. `params` and `grads` must list the same blocks, in
    /// the same order, as the layout this state was built from.
    pub fn step(
        &mut self,
        params: &mut [(String, &mut [f64])],
        grads: &[(String, &[f64])],
    ) -> Result<()> {
        assert_eq!(params.len(), grads.len(), "block count mismatch");
        assert_eq!(params.len(), self.moments.len(), "state layout mismatch");
        self.step += 1;
        let h = self.hyper;
        let bc1 = 1.0 - h.beta1.powi(self.step as i32);
        let bc2 = 1.0 - h.beta2.powi(self.step as i32);

        for (bi, (param, grad)) in params.iter_mut().zip(grads).enumerate() {
            let (name, m, v) = &mut self.moments[bi];
            assert_eq!(&param.0, name, "block order mismatch");
            assert_eq!(&grad.0, name, "block order mismatch");
            if grad.1.iter().any(|g| g.is_nan()) {
                return Err(CoreError::NanGradient {
                    block: name.clone(),
                });
            }
            for i in 0..param.1.len() {
                let g = grad.1[i];
                m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
                v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                param.1[i] -= h.learning_rate * m_hat / (v_hat.sqrt() + h.epsilon);
            }
        }
        Ok(())
    }
}

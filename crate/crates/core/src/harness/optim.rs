use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::Mat;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Step-decayed learning rate: `base * decay^(epoch / every)`.
pub fn learning_rate(base: f64, decay: f64, every: usize, epoch: usize) -> f64 {
    base * decay.powi((epoch / every.max(1)) as i32)
}

/// Adam with a reduced learning rate for the fine-tuned parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    m: Vec<Mat>,
    v: Vec<Mat>,
    t: i32,
    pub fine_tune_multiplier: f64,
}

impl Adam {
    pub fn new(params: &ParamSet, fine_tune_multiplier: f64) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            fine_tune_multiplier,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[Mat], lr: f64) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::shape("gradients", self.m.len(), grads.len()));
        }
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (i, p) in params.iter_mut().enumerate() {
            let rate = if p.group.is_fine_tune() { lr * self.fine_tune_multiplier } else { lr };
            let g = grads[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (k, w) in p.value.data_mut().iter_mut().enumerate() {
                m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * g[k];
                v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * g[k] * g[k];
                *w -= rate * (m[k] / c1) / ((v[k] / c2).sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }
}

//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::nn::Param;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    /// Completed steps.
    pub t: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[Param]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.value.shape().to_vec())).collect();
        Adam {
            config,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One bias-corrected update. Fails without touching anything if a gradient
    /// is non-finite or mis-shaped.
    pub fn step(&mut self, params: &mut [Param], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::InvalidArgument(format!(
                "adam: {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.value.shape() != g.shape() {
                return Err(Error::shape("adam_step", p.value.shape(), g.shape()));
            }
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient {
                    param: p.name.clone(),
                    step: self.t + 1,
                });
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let mut pd = p.value.data().to_vec();
            let mut md = m.data().to_vec();
            let mut vd = v.data().to_vec();
            for (((w, &gi), mi), vi) in pd.iter_mut().zip(g.data()).zip(md.iter_mut()).zip(vd.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
            let shape = p.value.shape().to_vec();
            p.value = Tensor::from_parts(shape.clone(), pd);
            *m = Tensor::from_parts(shape.clone(), md);
            *v = Tensor::from_parts(shape, vd);
        }
        Ok(())
    }
}

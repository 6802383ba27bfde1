//! AdamW with decoupled weight decay.
//!
//! Moment state lives in the optimizer, keyed by group name and tensor
//! index, and is created lazily on the first step. One optimizer instance
//! is used per training phase; checkpoints therefore never need to carry
//! moment buffers.

use std::collections::BTreeMap;

use crate::autodiff::mat::Mat;
use crate::autodiff::param::ParameterGroup;

/// Decoupled-weight-decay Adam.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    moments: BTreeMap<String, Vec<(Mat, Mat)>>,
}

impl AdamW {
    /// Canonical defaults: β = (0.9, 0.999), ε = 1e-8.
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply one update to every trainable group. Frozen groups are not
    /// touched at all; a trainable tensor without a gradient is treated as
    /// having a zero gradient (its moments decay and weight decay applies).
    pub fn step(&mut self, groups: &mut [&mut ParameterGroup]) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);

        for group in groups.iter_mut() {
            if !group.trainable {
                continue;
            }
            let entry = self.moments.entry(group.name.clone()).or_insert_with(|| {
                group
                    .tensors
                    .iter()
                    .map(|t| {
                        let (r, c) = t.value.shape();
                        (Mat::zeros(r, c), Mat::zeros(r, c))
                    })
                    .collect()
            });

            for (tensor, (m, v)) in group.tensors.iter_mut().zip(entry.iter_mut()) {
                let zero;
                let grad = match &tensor.grad {
                    Some(g) => g,
                    None => {
                        zero = Mat::zeros(tensor.value.rows(), tensor.value.cols());
                        &zero
                    }
                };
                let value = tensor.value.data_mut();
                let gdata = grad.data();
                let mdata = m.data_mut();
                let vdata = v.data_mut();
                for i in 0..value.len() {
                    // Decoupled decay first, then the Adam step.
                    value[i] -= self.lr * self.weight_decay * value[i];
                    let g = gdata[i];
                    mdata[i] = self.beta1 * mdata[i] + (1.0 - self.beta1) * g;
                    vdata[i] = self.beta2 * vdata[i] + (1.0 - self.beta2) * g * g;
                    let m_hat = mdata[i] / bc1;
                    let v_hat = vdata[i] / bc2;
                    value[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                }
            }
        }
    }
}

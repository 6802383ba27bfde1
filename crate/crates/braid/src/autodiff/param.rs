//! Trainable parameter storage.

use crate::autodiff::mat::Mat;
use crate::error::{Error, Result};
use crate::hash::Fnv64;

/// One parameter tensor with its accumulated gradient.
///
/// The gradient is `None` until some backward pass has been flushed into it;
/// this is what lets [`ParameterGroup::grad_norm`] tell "zero gradient"
/// apart from "no gradient yet".
#[derive(Clone, Debug)]
pub struct PTensor {
    pub value: Mat,
    pub grad: Option<Mat>,
}

impl PTensor {
    pub fn new(value: Mat) -> Self {
        PTensor { value, grad: None }
    }

    pub(crate) fn accumulate_grad(&mut self, g: &Mat) {
        match &mut self.grad {
            Some(existing) => existing.add_scaled(g, 1.0),
            None => self.grad = Some(g.clone()),
        }
    }
}

/// A named set of parameter tensors trained (or frozen) as a unit.
#[derive(Clone, Debug)]
pub struct ParameterGroup {
    pub name: String,
    pub tensors: Vec<PTensor>,
    pub trainable: bool,
}

impl ParameterGroup {
    pub fn new(name: impl Into<String>, tensors: Vec<Mat>, trainable: bool) -> Self {
        ParameterGroup {
            name: name.into(),
            tensors: tensors.into_iter().map(PTensor::new).collect(),
            trainable,
        }
    }

    pub fn num_params(&self) -> usize {
        self.tensors
            .iter()
            .map(|t| t.value.rows() * t.value.cols())
            .sum()
    }

    /// Drop all gradients back to the "no gradient" state.
    pub fn zero_grad(&mut self) {
        for t in &mut self.tensors {
            t.grad = None;
        }
    }

    /// Euclidean norm over every gradient entry in the group.
    ///
    /// Errors if any tensor has never received a gradient since the last
    /// [`ParameterGroup::zero_grad`].
    pub fn grad_norm(&self) -> Result<f64> {
        let mut sq = 0.0;
        for t in &self.tensors {
            let g = t.grad.as_ref().ok_or_else(|| Error::NoGradient {
                group: self.name.clone(),
            })?;
            sq += g.data().iter().map(|v| v * v).sum::<f64>();
        }
        Ok(sq.sqrt())
    }

    /// Bit-level hash over all parameter values (shape-sensitive).
    pub fn content_hash(&self) -> u64 {
        let mut h = Fnv64::new();
        h.update(self.name.as_bytes());
        for t in &self.tensors {
            h.update(&t.value.content_hash().to_le_bytes());
        }
        h.finish()
    }
}

/// Euclidean norm over the gradients of several groups taken together.
pub fn grad_norm_over(groups: &[&ParameterGroup]) -> Result<f64> {
    let mut sq = 0.0;
    for g in groups {
        let n = g.grad_norm()?;
        sq += n * n;
    }
    Ok(sq.sqrt())
}

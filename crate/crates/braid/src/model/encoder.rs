//! Frozen modality encoders.
//!
//! Stand-ins for pre-trained feature extractors: seeded random two-layer
//! tanh perceptrons. Deterministic, nonlinear, and never updated — their
//! parameters sit in a `trainable = false` group so the frozen-state
//! integrity checks can hash them like any other parameters.

use crate::autodiff::mat::{self, Mat};
use crate::autodiff::ParameterGroup;
use crate::error::{Error, Result};
use crate::hash::Fnv64;
use crate::rng::rng_from_seed;
use serde::{Deserialize, Serialize};

/// Everything needed to rebuild an encoder bit-identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub id: String,
    pub in_dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
    pub seed: u64,
}

/// A pure function from raw samples to encoder features.
#[derive(Clone, Debug)]
pub struct FrozenEncoder {
    pub spec: EncoderSpec,
    pub params: ParameterGroup,
}

impl FrozenEncoder {
    pub fn from_spec(spec: EncoderSpec) -> Self {
        let mut rng = rng_from_seed(spec.seed);
        let w1 = Mat::uniform(
            spec.in_dim,
            spec.hidden,
            super::mlp::init_limit(spec.in_dim),
            &mut rng,
        );
        let b1 = Mat::uniform(1, spec.hidden, 0.1, &mut rng);
        let w2 = Mat::uniform(
            spec.hidden,
            spec.out_dim,
            super::mlp::init_limit(spec.hidden),
            &mut rng,
        );
        let b2 = Mat::uniform(1, spec.out_dim, 0.1, &mut rng);
        let params = ParameterGroup::new(
            format!("encoder.{}", spec.id),
            vec![w1, b1, w2, b2],
            false,
        );
        FrozenEncoder { spec, params }
    }

    pub fn id(&self) -> &str {
        &self.spec.id
    }

    pub fn out_dim(&self) -> usize {
        self.spec.out_dim
    }

    /// Encode a batch (rows are samples). Same input, same output, always;
    /// no tape is ever recorded for an encoder.
    pub fn encode(&self, x: &Mat) -> Result<Mat> {
        if x.cols() != self.spec.in_dim {
            return Err(Error::DimensionMismatch {
                what: format!("input to encoder '{}'", self.spec.id),
                expected: self.spec.in_dim,
                got: x.cols(),
            });
        }
        let t = &self.params.tensors;
        let h = mat::tanh(&mat::add_bias(&mat::matmul(x, &t[0].value)?, &t[1].value)?);
        mat::add_bias(&mat::matmul(&h, &t[2].value)?, &t[3].value)
    }

    /// Bit-level hash of the encoder outputs on a probe batch; the frozen
    /// purity checks compare this across phases.
    pub fn output_hash(&self, probe: &Mat) -> Result<u64> {
        let out = self.encode(probe)?;
        let mut h = Fnv64::new();
        h.update(self.spec.id.as_bytes());
        h.update(&out.content_hash().to_le_bytes());
        Ok(h.finish())
    }
}

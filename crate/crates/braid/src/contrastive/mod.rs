//! Pair construction, the bidirectional InfoNCE loss, and gradient-norm
//! adaptive weighting of its two directions.

pub mod loss;
pub mod step;
pub mod weighting;

pub use loss::{bidirectional_loss, infonce_directional, DenominatorMode};
pub use step::{weighted_loss_step, LossReport, StepOptions};
pub use weighting::{adaptive_weights, WeightSmoother, Weights, NORM_FLOOR};

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::mat::Mat;
use crate::data::PairedDataset;
use crate::error::{Error, Result};

/// A batch of m synchronized sample pairs. Row i of `xa` and row i of `xb`
/// observe the same event (the positive pair); every cross combination
/// (i ≠ j) is a negative. No labels travel with a batch.
#[derive(Clone, Debug)]
pub struct PairBatch {
    pub modality_a: String,
    pub modality_b: String,
    pub xa: Mat,
    pub xb: Mat,
}

impl PairBatch {
    pub fn m(&self) -> usize {
        self.xa.rows()
    }

    pub fn positives(&self) -> usize {
        self.m()
    }

    pub fn negatives(&self) -> usize {
        self.m() * self.m() - self.m()
    }
}

/// Sample a batch of m train pairs without replacement.
pub fn build_pairs(ds: &PairedDataset, m: usize, rng: &mut ChaCha8Rng) -> Result<PairBatch> {
    if m < 2 {
        return Err(Error::BadBatchSize {
            m,
            reason: "at least 2 pairs are needed to form any negative".into(),
        });
    }
    if m > ds.n_train() {
        return Err(Error::BadBatchSize {
            m,
            reason: format!(
                "dataset '{}' has only {} train pairs (sampling is without replacement)",
                ds.id,
                ds.n_train()
            ),
        });
    }
    let indices: Vec<usize> = sample(rng, ds.n_train(), m).into_vec();
    Ok(PairBatch {
        modality_a: ds.modality_a.clone(),
        modality_b: ds.modality_b.clone(),
        xa: ds.train_a.select_rows(&indices),
        xb: ds.train_b.select_rows(&indices),
    })
}

//! One-shot downstream classification.
//!
//! A small 2-layer softmax head is trained on exactly one labeled
//! embedding per class while the backbone stays frozen; accuracy on the
//! remaining test samples is reported as mean ± sd over several support
//! draws, since single draws are noisy at desk scale.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::autodiff::mat::Mat;
use crate::autodiff::{AdamW, Tape};
use crate::error::{Error, Result};
use crate::model::{AlignmentModel, Mlp};
use crate::rng::{derive_seed_indexed, rng_from_seed};
use rand::Rng;

/// The fixed head-training budget; recorded in every metrics file so runs
/// stay comparable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadProtocol {
    pub hidden: usize,
    pub steps: usize,
    pub lr: f64,
    pub support_draws: usize,
}

impl Default for HeadProtocol {
    fn default() -> Self {
        HeadProtocol {
            hidden: 64,
            steps: 200,
            lr: 1e-2,
            support_draws: 5,
        }
    }
}

/// A one-shot task over the test split of a paired dataset: per modality
/// the raw test samples (row-synchronized), shared labels, and the class
/// count.
#[derive(Clone, Debug)]
pub struct OneShotTask {
    pub modalities: Vec<String>,
    pub samples: BTreeMap<String, Mat>,
    pub labels: Vec<u32>,
    pub num_classes: usize,
}

impl OneShotTask {
    /// Build a task from a dataset's test split for a subset of its two
    /// modalities.
    pub fn from_dataset(
        ds: &crate::data::PairedDataset,
        modalities: &[&str],
        num_classes: usize,
    ) -> Result<Self> {
        let mut samples = BTreeMap::new();
        for &m in modalities {
            let side = ds.test_side(m).ok_or_else(|| Error::UnknownModality {
                name: m.into(),
            })?;
            samples.insert(m.to_string(), side.clone());
        }
        Ok(OneShotTask {
            modalities: modalities.iter().map(|s| s.to_string()).collect(),
            samples,
            labels: ds.test_labels.clone(),
            num_classes,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OneShotOutcome {
    pub mean: f64,
    pub sd: f64,
    pub per_draw: Vec<f64>,
    pub protocol: HeadProtocol,
}

/// Draw one support index per class; everything else is query.
fn split_support_query(
    labels: &[u32],
    num_classes: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let mut support = Vec::with_capacity(num_classes);
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::TooFewSamples {
                class: c as u32,
                got: members.len(),
            });
        }
        support.push(members[rng.gen_range(0..members.len())]);
    }
    let query: Vec<usize> = (0..labels.len()).filter(|i| !support.contains(i)).collect();
    Ok((support, query))
}

/// Mean softmax cross-entropy on a tape: logits vs integer labels.
fn cross_entropy(tape: &mut Tape, logits: crate::autodiff::TensorId, labels: &[u32]) -> Result<crate::autodiff::TensorId> {
    let (m, c) = tape.value(logits).shape();
    let onehot = tape.leaf(Mat::from_fn(m, c, |r, col| {
        if labels[r] as usize == col {
            1.0
        } else {
            0.0
        }
    }));
    let lse = tape.row_logsumexp(logits)?;
    let lse_sum = tape.sum(lse)?;
    let picked = tape.mul(logits, onehot)?;
    let picked_sum = tape.sum(picked)?;
    let nll = tape.sub(lse_sum, picked_sum)?;
    tape.scale(nll, 1.0 / m as f64)
}

fn accuracy(logits: &Mat, labels: &[u32]) -> f64 {
    let mut hits = 0usize;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let mut best = 0usize;
        for c in 1..row.len() {
            if row[c] > row[best] {
                best = c;
            }
        }
        if best as u32 == label {
            hits += 1;
        }
    }
    hits as f64 / logits.rows() as f64
}

/// One-shot evaluation directly on precomputed embeddings.
pub fn one_shot_on_embeddings(
    embeddings: &Mat,
    labels: &[u32],
    num_classes: usize,
    seed: u64,
    protocol: &HeadProtocol,
) -> Result<OneShotOutcome> {
    let mut per_draw = Vec::with_capacity(protocol.support_draws);
    for draw in 0..protocol.support_draws {
        let mut rng = rng_from_seed(derive_seed_indexed(seed, "support-draw", draw as u64));
        let (support, query) = split_support_query(labels, num_classes, &mut rng)?;
        let x_sup = embeddings.select_rows(&support);
        let y_sup: Vec<u32> = support.iter().map(|&i| labels[i]).collect();

        let mut head = Mlp::new(
            "head",
            &[embeddings.cols(), protocol.hidden, num_classes],
            derive_seed_indexed(seed, "head-init", draw as u64),
            true,
        );
        let mut opt = AdamW::new(protocol.lr, 0.0);
        for _ in 0..protocol.steps {
            head.group.zero_grad();
            let mut tape = Tape::new();
            let x = tape.leaf(x_sup.clone());
            let logits = head.forward_tape(&mut tape, x)?;
            let loss = cross_entropy(&mut tape, logits, &y_sup)?;
            tape.backward(loss)?;
            tape.flush_grads(&mut [&mut head.group])?;
            opt.step(&mut [&mut head.group]);
        }

        let x_query = embeddings.select_rows(&query);
        let y_query: Vec<u32> = query.iter().map(|&i| labels[i]).collect();
        let logits = head.forward_value(&x_query)?;
        per_draw.push(accuracy(&logits, &y_query));
    }
    let mean = per_draw.iter().sum::<f64>() / per_draw.len() as f64;
    let sd = if per_draw.len() > 1 {
        (per_draw.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>()
            / (per_draw.len() - 1) as f64)
            .sqrt()
    } else {
        0.0
    };
    Ok(OneShotOutcome {
        mean,
        sd,
        per_draw,
        protocol: *protocol,
    })
}

/// Embed the task's modalities (concatenated in task order), then run the
/// one-shot protocol. The backbone is only ever read.
pub fn one_shot_eval(
    model: &AlignmentModel,
    task: &OneShotTask,
    seed: u64,
    protocol: &HeadProtocol,
) -> Result<OneShotOutcome> {
    let mut concat: Option<Mat> = None;
    for m in &task.modalities {
        let raw = task.samples.get(m).ok_or_else(|| Error::UnknownModality {
            name: m.clone(),
        })?;
        let emb = model.embed_modality(m, raw)?;
        concat = Some(match concat {
            None => emb,
            Some(acc) => acc.concat_cols(&emb),
        });
    }
    let embeddings = concat.ok_or_else(|| Error::InvalidConfig("task has no modalities".into()))?;
    one_shot_on_embeddings(&embeddings, &task.labels, task.num_classes, seed, protocol)
}

/// Concatenated multi-modality one-shot accuracy. Requires at least two
/// modalities; every modality must exist in the model, including
/// combinations never co-present in any training dataset.
pub fn fusion_eval(
    model: &AlignmentModel,
    task: &OneShotTask,
    seed: u64,
    protocol: &HeadProtocol,
) -> Result<OneShotOutcome> {
    if task.modalities.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "fusion needs at least two modalities, got {}",
            task.modalities.len()
        )));
    }
    for m in &task.modalities {
        model.tower_of(m)?;
    }
    one_shot_eval(model, task, seed, protocol)
}

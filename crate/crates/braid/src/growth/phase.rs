//! Running one binary alignment phase.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::autodiff::AdamW;
use crate::contrastive::step::{DistillSpec, Side};
use crate::contrastive::{build_pairs, weighted_loss_step, StepOptions, WeightSmoother};
use crate::data::DatasetStore;
use crate::error::{Error, Result};
use crate::eval::retrieval_eval;
use crate::growth::config::PhasePolicy;
use crate::growth::plan::{PhaseKind, PlannedPhase};
use crate::model::AlignmentModel;
use crate::rng::rng_from_seed;

/// Append-only record of one executed phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub index: usize,
    pub kind: String,
    pub branch: String,
    /// Junction for growth phases; the partner modality for the initial one.
    pub junction: String,
    pub dataset_id: String,
    pub epochs_run: usize,
    pub steps_run: usize,
    pub converged_early: bool,
    /// None for a zero-epoch (no-op) phase.
    pub final_epoch_loss: Option<f64>,
    pub final_distill: Option<f64>,
    /// Smoothed junction-direction weight, first and last step; None for a
    /// zero-epoch phase.
    pub junction_weight_first: Option<f64>,
    pub junction_weight_last: Option<f64>,
    /// Per-epoch mean of the junction-direction weight.
    pub junction_weight_per_epoch: Vec<f64>,
    /// Mean recall@1 per previously aligned dataset, before the phase.
    pub pre_retrieval: BTreeMap<String, f64>,
    /// Same pairs, after the phase.
    pub post_retrieval: BTreeMap<String, f64>,
    /// Content hash of all model parameters at phase end.
    pub model_hash: u64,
}

/// Per-step line in the phase log, JSONL.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepLogLine {
    pub phase: usize,
    pub epoch: usize,
    pub step: usize,
    #[serde(flatten)]
    pub report: crate::contrastive::LossReport,
}

fn mean_pair_recall(model: &AlignmentModel, ds: &crate::data::PairedDataset) -> Result<f64> {
    let ab = retrieval_eval(model, &ds.modality_a, &ds.modality_b, ds)?;
    let ba = retrieval_eval(model, &ds.modality_b, &ds.modality_a, ds)?;
    Ok(0.5 * (ab.recall_at_1 + ba.recall_at_1))
}

/// Train one phase to its epoch budget or its loss plateau.
///
/// On a non-finite loss the phase aborts: the model is restored to its
/// pre-phase state and the error reports phase and step. On success the
/// trunk gains the phase's new modality (or both, for the initial phase),
/// and under protection the prototype adopts its EMA shadow.
pub fn run_phase(
    model: &mut AlignmentModel,
    phase: &PlannedPhase,
    phase_index: usize,
    policy: &PhasePolicy,
    store: &DatasetStore,
    mut log: Option<&mut dyn Write>,
) -> Result<PhaseRecord> {
    let ds = store.get(&phase.dataset_id)?;

    // Structural checks: the dataset pairs exactly this phase's modalities,
    // the junction is in the trunk, the branch is not.
    let (trunk_side, new_side) = phase.modalities();
    {
        let want: std::collections::BTreeSet<&str> = [trunk_side, new_side].into();
        let have: std::collections::BTreeSet<&str> =
            [ds.modality_a.as_str(), ds.modality_b.as_str()].into();
        if want != have {
            return Err(Error::InvalidConfig(format!(
                "dataset '{}' pairs {:?}, phase {} needs {:?}",
                ds.id, have, phase_index, want
            )));
        }
    }
    match &phase.kind {
        PhaseKind::Initial { .. } => {
            if !model.aligned.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "initial phase {phase_index} on a model with an existing trunk"
                )));
            }
        }
        PhaseKind::Growth { branch, junction } => {
            if !model.is_aligned(junction) {
                return Err(Error::JunctionNotInTrunk {
                    phase: phase_index,
                    junction: junction.clone(),
                });
            }
            if model.is_aligned(branch) {
                return Err(Error::InvalidConfig(format!(
                    "branch '{branch}' is already aligned (phase {phase_index})"
                )));
            }
        }
    }
    if ds.n_train() < 2 {
        return Err(Error::BadBatchSize {
            m: policy.batch_size,
            reason: format!("dataset '{}' has no usable training pairs", ds.id),
        });
    }

    // Retrieval on every previously aligned pair, same test sets pre/post.
    let prior_pairs: Vec<String> = store
        .iter()
        .filter(|d| {
            d.n_test() > 0
                && d.id != ds.id
                && model.is_aligned(&d.modality_a)
                && model.is_aligned(&d.modality_b)
        })
        .map(|d| d.id.clone())
        .collect();
    let mut pre_retrieval = BTreeMap::new();
    for id in &prior_pairs {
        pre_retrieval.insert(id.clone(), mean_pair_recall(model, store.get(id)?)?);
    }

    let snapshot = model.snapshot();
    let result = train_loop(model, phase, phase_index, policy, ds, &mut log);
    match result {
        Ok(partial) => {
            match &phase.kind {
                PhaseKind::Initial { first, second } => {
                    model.aligned.push(first.clone());
                    model.aligned.push(second.clone());
                }
                PhaseKind::Growth { branch, .. } => model.aligned.push(branch.clone()),
            }
            let mut post_retrieval = BTreeMap::new();
            for id in &prior_pairs {
                post_retrieval.insert(id.clone(), mean_pair_recall(model, store.get(id)?)?);
            }
            Ok(PhaseRecord {
                index: phase_index,
                kind: match phase.kind {
                    PhaseKind::Initial { .. } => "initial".into(),
                    PhaseKind::Growth { .. } => "growth".into(),
                },
                branch: new_side.to_string(),
                junction: trunk_side.to_string(),
                dataset_id: ds.id.clone(),
                pre_retrieval,
                post_retrieval,
                model_hash: model.params_hash(),
                ..partial
            })
        }
        Err(e) => {
            model.restore(&snapshot);
            Err(e)
        }
    }
}

/// The inner epoch/step loop; returns a partially filled record.
fn train_loop(
    model: &mut AlignmentModel,
    phase: &PlannedPhase,
    phase_index: usize,
    policy: &PhasePolicy,
    ds: &crate::data::PairedDataset,
    log: &mut Option<&mut dyn Write>,
) -> Result<PhaseRecord> {
    model.set_trainable(&policy.trainable_groups);
    if policy.protect {
        model.prototype.snapshot_teacher();
        model.prototype.reset_shadow();
    }

    // The junction-direction weight is w_{junction←branch}; map it onto the
    // dataset's (a, b) sides once.
    let (trunk_side, _) = phase.modalities();
    let junction_is_a = ds.modality_a == trunk_side;

    let distill = if policy.protect {
        Some(DistillSpec {
            weight: policy.distill_weight,
            junction: if junction_is_a { Side::A } else { Side::B },
        })
    } else {
        None
    };
    let opts = StepOptions {
        tau: policy.tau,
        denominator: policy.denominator(),
        adaptive: policy.adaptive,
        forced_weights: None,
        distill,
    };

    let batch_size = policy.batch_size.min(ds.n_train()).max(2);
    let steps_per_epoch = (ds.n_train() / batch_size).max(1);
    let mut rng = rng_from_seed(policy.batch_seed);
    let mut smoother = WeightSmoother::new(policy.weight_momentum);
    let mut optimizer = AdamW::new(policy.lr, policy.weight_decay);

    let mut epoch_losses: Vec<f64> = Vec::new();
    let mut junction_weight_per_epoch = Vec::new();
    let mut junction_weight_first = None;
    let mut junction_weight_last = None;
    let mut final_distill = None;
    let mut steps_run = 0usize;
    let mut converged_early = false;

    let mut epochs_run = 0usize;
    for epoch in 0..policy.epochs {
        let mut epoch_loss = 0.0;
        let mut epoch_wj = 0.0;
        for step in 0..steps_per_epoch {
            let batch = build_pairs(ds, batch_size, &mut rng)?;
            // Split towers out of the model by index to get two &mut.
            let ia = model
                .towers
                .iter()
                .position(|t| t.modality.name == ds.modality_a)
                .ok_or_else(|| Error::UnknownModality {
                    name: ds.modality_a.clone(),
                })?;
            let ib = model
                .towers
                .iter()
                .position(|t| t.modality.name == ds.modality_b)
                .ok_or_else(|| Error::UnknownModality {
                    name: ds.modality_b.clone(),
                })?;
            let report = {
                let (ta, tb) = two_mut(&mut model.towers, ia, ib);
                weighted_loss_step(ta, tb, &mut model.prototype, &batch, &opts, Some(&mut smoother))
            }
            .map_err(|e| match e {
                Error::NonFinite { op } => Error::PhaseAborted {
                    phase: phase_index,
                    step: steps_run,
                    reason: format!("non-finite value in {op}"),
                },
                other => other,
            })?;
            if !report.loss_total.is_finite() {
                return Err(Error::PhaseAborted {
                    phase: phase_index,
                    step: steps_run,
                    reason: format!("non-finite loss {}", report.loss_total),
                });
            }

            if policy.protect {
                model.prototype.ema_update(policy.ema_decay);
            }
            optimizer.step(&mut model.param_groups_mut());

            let wj = if junction_is_a {
                report.w_a_from_b
            } else {
                report.w_b_from_a
            };
            if steps_run == 0 {
                junction_weight_first = Some(wj);
            }
            junction_weight_last = Some(wj);
            epoch_wj += wj;
            epoch_loss += report.loss_total;
            final_distill = report.distill;
            if let Some(w) = log.as_deref_mut() {
                let line = StepLogLine {
                    phase: phase_index,
                    epoch,
                    step,
                    report: report.clone(),
                };
                serde_json::to_writer(&mut *w, &line)?;
                w.write_all(b"\n").map_err(|e| Error::io("phase log", e))?;
            }
            steps_run += 1;
        }
        epoch_losses.push(epoch_loss / steps_per_epoch as f64);
        junction_weight_per_epoch.push(epoch_wj / steps_per_epoch as f64);
        epochs_run = epoch + 1;

        // Plateau: the best loss of the last window epochs improves on the
        // best before the window by less than the relative threshold.
        // Best-vs-best keeps single noisy epochs from faking convergence.
        if epoch + 1 > policy.plateau_window {
            let split = epoch_losses.len() - policy.plateau_window;
            let best_prior = epoch_losses[..split].iter().cloned().fold(f64::INFINITY, f64::min);
            let best_recent = epoch_losses[split..].iter().cloned().fold(f64::INFINITY, f64::min);
            let rel = (best_prior - best_recent) / best_prior.abs().max(1e-12);
            if rel < policy.plateau_rel_improvement {
                converged_early = true;
                break;
            }
        }
    }

    if policy.protect {
        model.prototype.adopt_shadow();
        model.prototype.clear_teacher();
    }

    Ok(PhaseRecord {
        index: phase_index,
        kind: String::new(),
        branch: String::new(),
        junction: String::new(),
        dataset_id: String::new(),
        epochs_run,
        steps_run,
        converged_early,
        // A zero-epoch phase is a legal no-op (useful as a probe control).
        final_epoch_loss: epoch_losses.last().copied(),
        final_distill,
        junction_weight_first,
        junction_weight_last,
        junction_weight_per_epoch,
        pre_retrieval: BTreeMap::new(),
        post_retrieval: BTreeMap::new(),
        model_hash: 0,
    })
}

/// Two disjoint mutable borrows from one slice.
fn two_mut<T>(slice: &mut [T], i: usize, j: usize) -> (&mut T, &mut T) {
    assert_ne!(i, j, "a phase needs two distinct towers");
    if i < j {
        let (lo, hi) = slice.split_at_mut(j);
        (&mut lo[i], &mut hi[0])
    } else {
        let (lo, hi) = slice.split_at_mut(i);
        (&mut hi[0], &mut lo[j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_mut_returns_disjoint_references() {
        let mut v = vec![1, 2, 3, 4];
        let (a, b) = two_mut(&mut v, 3, 1);
        *a += 10;
        *b += 20;
        assert_eq!(v, vec![1, 22, 3, 14]);
    }
}

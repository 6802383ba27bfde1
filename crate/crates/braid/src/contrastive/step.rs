//! One weighted contrastive training step.
//!
//! A step builds one tape, then runs three backward passes over it: one per
//! direction to probe the concept-module gradient norms (weights come from
//! their reciprocals and are treated as constants thereafter), and a final
//! weighted pass whose gradients stay in the parameter groups for the
//! optimizer. Probe gradients are zeroed before the weighted pass.

use serde::{Deserialize, Serialize};

use crate::autodiff::param::grad_norm_over;
use crate::autodiff::Tape;
use crate::contrastive::loss::{infonce_directional, DenominatorMode};
use crate::contrastive::weighting::{adaptive_weights, WeightSmoother, Weights};
use crate::contrastive::PairBatch;
use crate::error::Result;
use crate::model::{ModalityTower, PrototypeNetwork};

/// Which side of the batch the junction modality sits on (growth phases
/// distill the prototype on junction features).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

/// Auxiliary distillation: anchor the live prototype's outputs to the
/// frozen teacher's on junction-modality features.
#[derive(Clone, Copy, Debug)]
pub struct DistillSpec {
    pub weight: f64,
    pub junction: Side,
}

#[derive(Clone, Debug)]
pub struct StepOptions {
    pub tau: f64,
    pub denominator: DenominatorMode,
    /// false → fixed (0.5, 0.5), the unweighted Eq.-3 form.
    pub adaptive: bool,
    /// Test hook: inject the weights as literals, skipping the probes.
    pub forced_weights: Option<(f64, f64)>,
    pub distill: Option<DistillSpec>,
}

impl StepOptions {
    pub fn plain(tau: f64) -> Self {
        StepOptions {
            tau,
            denominator: DenominatorMode::WithPositive,
            adaptive: true,
            forced_weights: None,
            distill: None,
        }
    }
}

/// Everything one step reports; streamed as one JSON line per step into
/// the phase log.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LossReport {
    /// The weighted bidirectional value (the contrastive objective alone).
    pub loss_total: f64,
    pub loss_a_from_b: f64,
    pub loss_b_from_a: f64,
    pub w_a_from_b: f64,
    pub w_b_from_a: f64,
    /// None when the probes were skipped (weights forced by the caller).
    pub grad_norm_a_from_b: Option<f64>,
    pub grad_norm_b_from_a: Option<f64>,
    /// Distillation term value, when a teacher is active.
    pub distill: Option<f64>,
    /// Both probe norms were under the convergence floor.
    pub converged_weights: bool,
}

impl LossReport {
    /// The weight-normalization contract, asserted on every step.
    pub fn weights_valid(&self) -> bool {
        self.w_a_from_b + self.w_b_from_a == 1.0
            && (0.0..=1.0).contains(&self.w_a_from_b)
            && (0.0..=1.0).contains(&self.w_b_from_a)
    }
}

/// Run one weighted step: probe both directions, weight, backward, leaving
/// the gradients of the two concept modules and the prototype in place for
/// the optimizer. Frozen encoders never see the tape.
pub fn weighted_loss_step(
    tower_a: &mut ModalityTower,
    tower_b: &mut ModalityTower,
    prototype: &mut PrototypeNetwork,
    batch: &PairBatch,
    opts: &StepOptions,
    smoother: Option<&mut WeightSmoother>,
) -> Result<LossReport> {
    tower_a.concept.mlp.group.zero_grad();
    tower_b.concept.mlp.group.zero_grad();
    prototype.mlp.group.zero_grad();

    let mut tape = Tape::new();
    let feat_a = tower_a.features_tape(&mut tape, &batch.xa)?;
    let feat_b = tower_b.features_tape(&mut tape, &batch.xb)?;
    let emb_a = prototype.forward_tape(&mut tape, feat_a)?;
    let emb_b = prototype.forward_tape(&mut tape, feat_b)?;

    let l_ab = infonce_directional(&mut tape, emb_a, emb_b, opts.tau, opts.denominator)?;
    let l_ba = infonce_directional(&mut tape, emb_b, emb_a, opts.tau, opts.denominator)?;

    // Probe passes, one per direction. The norm for direction a<-b is
    // taken over the concept module of the anchored tower: the side that
    // is already in place barely moves under its own anchored loss, so its
    // direction earns the large weight and pulls the other modality toward
    // it. (A norm over both modules is dominated by the fresher module in
    // both directions and washes the asymmetry out.)
    let probe = |tape: &mut Tape,
                 root,
                 anchor_is_a: bool,
                 ta: &mut ModalityTower,
                 tb: &mut ModalityTower,
                 proto: &mut PrototypeNetwork|
     -> Result<f64> {
        tape.backward(root)?;
        tape.flush_grads(&mut [
            &mut ta.concept.mlp.group,
            &mut tb.concept.mlp.group,
            &mut proto.mlp.group,
        ])?;
        let anchored = if anchor_is_a { &*ta } else { &*tb };
        let norm = grad_norm_over(&[&anchored.concept.mlp.group])?;
        ta.concept.mlp.group.zero_grad();
        tb.concept.mlp.group.zero_grad();
        proto.mlp.group.zero_grad();
        tape.zero_grads();
        Ok(norm)
    };

    let (norm_ab, norm_ba) = if opts.forced_weights.is_some() {
        (None, None)
    } else {
        let nab = probe(&mut tape, l_ab, true, tower_a, tower_b, prototype)?;
        let nba = probe(&mut tape, l_ba, false, tower_a, tower_b, prototype)?;
        (Some(nab), Some(nba))
    };

    let weights = match opts.forced_weights {
        Some((w_ab, w_ba)) => Weights {
            a_from_b: w_ab,
            b_from_a: w_ba,
            converged: false,
        },
        None if !opts.adaptive => Weights::equal(),
        None => {
            let raw = adaptive_weights(norm_ab.unwrap(), norm_ba.unwrap());
            match smoother {
                Some(s) => s.apply(raw),
                None => raw,
            }
        }
    };

    // Weighted objective, weights as plain constants: Eq-style
    // (w·L_ab + w·L_ba) / 2.
    let wl_ab = tape.scale(l_ab, weights.a_from_b)?;
    let wl_ba = tape.scale(l_ba, weights.b_from_a)?;
    let wsum = tape.add(wl_ab, wl_ba)?;
    let weighted = tape.scale(wsum, 0.5)?;

    let (root, distill_value) = match opts.distill {
        None => (weighted, None),
        Some(spec) => {
            // Junction features are detached: distillation constrains the
            // prototype only, not the concept modules. The anchor is the
            // squared Frobenius distance between live and teacher outputs,
            // summed over the batch like the contrastive term.
            let feat_id = match spec.junction {
                Side::A => feat_a,
                Side::B => feat_b,
            };
            let features = tape.value(feat_id).clone();
            let teacher_out = prototype.teacher_forward_value(&features)?;
            let detached = tape.leaf(features);
            let student = prototype.forward_tape(&mut tape, detached)?;
            let target = tape.leaf(teacher_out);
            let diff = tape.sub(student, target)?;
            let sq = tape.mul(diff, diff)?;
            let d = tape.sum(sq)?;
            let value = tape.value(d).scalar();
            let scaled = tape.scale(d, spec.weight)?;
            (tape.add(weighted, scaled)?, Some(value))
        }
    };

    tape.backward(root)?;
    tape.flush_grads(&mut [
        &mut tower_a.concept.mlp.group,
        &mut tower_b.concept.mlp.group,
        &mut prototype.mlp.group,
    ])?;

    let report = LossReport {
        loss_total: tape.value(weighted).scalar(),
        loss_a_from_b: tape.value(l_ab).scalar(),
        loss_b_from_a: tape.value(l_ba).scalar(),
        w_a_from_b: weights.a_from_b,
        w_b_from_a: weights.b_from_a,
        grad_norm_a_from_b: norm_ab,
        grad_norm_b_from_a: norm_ba,
        distill: distill_value,
        converged_weights: weights.converged,
    };
    debug_assert!(report.weights_valid(), "weight contract violated: {report:?}");
    Ok(report)
}

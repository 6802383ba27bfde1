//! Directional and bidirectional InfoNCE over cosine similarities.

use crate::autodiff::mat::Mat;
use crate::autodiff::{Tape, TensorId};
use crate::error::{Error, Result};

/// What the softmax denominator sums over.
///
/// The printed loss sums only negatives in the denominator; standard
/// InfoNCE includes the positive, which bounds the loss below by zero and
/// keeps it numerically tame. The inclusive form is the default; the
/// negatives-only form stays available for fidelity experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DenominatorMode {
    WithPositive,
    NegativesOnly,
}

/// Push the diagonal far below every real logit so it vanishes from the
/// row softmax; exp(x - max) underflows to exactly 0 at this offset.
const DIAG_MASK: f64 = 1e9;

/// One direction of the contrastive loss: rows of the similarity matrix
/// are the anchors, columns the candidates, the diagonal the positives.
///
/// Returns the sum over anchors of softmax cross-entropy at temperature
/// `tau`:  L = −Σᵢ log( exp(s(i,i)/τ) / Σⱼ exp(s(i,j)/τ) ).
pub fn infonce_directional(
    tape: &mut Tape,
    emb_anchor: TensorId,
    emb_other: TensorId,
    tau: f64,
    mode: DenominatorMode,
) -> Result<TensorId> {
    if tau <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    let (ra, ca) = tape.value(emb_anchor).shape();
    let (rb, cb) = tape.value(emb_other).shape();
    if (ra, ca) != (rb, cb) {
        return Err(Error::ShapeMismatch {
            op: "infonce_directional",
            left: (ra, ca),
            right: (rb, cb),
        });
    }
    let m = ra;
    let sim = tape.cosine_similarity(emb_anchor, emb_other)?;
    let logits = tape.scale(sim, 1.0 / tau)?;

    // Positive term: Σᵢ logits[i, i].
    let eye = tape.leaf(Mat::eye(m));
    let masked_diag = tape.mul(logits, eye)?;
    let positives = tape.sum(masked_diag)?;

    // Denominator term: Σᵢ logsumexp over row i.
    let lse_input = match mode {
        DenominatorMode::WithPositive => logits,
        DenominatorMode::NegativesOnly => {
            let diag_penalty = tape.leaf(Mat::from_fn(m, m, |r, c| {
                if r == c {
                    DIAG_MASK
                } else {
                    0.0
                }
            }));
            tape.sub(logits, diag_penalty)?
        }
    };
    let lse = tape.row_logsumexp(lse_input)?;
    let denom = tape.sum(lse)?;

    tape.sub(denom, positives)
}

/// Unweighted Eq-style bidirectional loss: the mean of the two directions.
/// Returns (total, loss_a_from_b, loss_b_from_a).
pub fn bidirectional_loss(
    tape: &mut Tape,
    emb_a: TensorId,
    emb_b: TensorId,
    tau: f64,
    mode: DenominatorMode,
) -> Result<(TensorId, TensorId, TensorId)> {
    let l_ab = infonce_directional(tape, emb_a, emb_b, tau, mode)?;
    let l_ba = infonce_directional(tape, emb_b, emb_a, tau, mode)?;
    let sum = tape.add(l_ab, l_ba)?;
    let total = tape.scale(sum, 0.5)?;
    Ok((total, l_ab, l_ba))
}

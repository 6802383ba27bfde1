//! Forgetting measurement: how much a later growth phase costs a
//! previously aligned pair.

use crate::data::PairedDataset;
use crate::error::{Error, Result};
use crate::eval::retrieval::retrieval_eval;
use crate::model::AlignmentModel;

/// recall@1 drop for a pair across a phase, computed on identical query
/// and gallery sets in both snapshots. The two retrieval directions are
/// averaged. Positive means the pair got worse.
pub fn forgetting_probe(
    before: &AlignmentModel,
    after: &AlignmentModel,
    ds: &PairedDataset,
) -> Result<f64> {
    if !(before.is_aligned(&ds.modality_a) && before.is_aligned(&ds.modality_b)) {
        return Err(Error::PairNotAligned {
            a: ds.modality_a.clone(),
            b: ds.modality_b.clone(),
        });
    }
    let r = |model: &AlignmentModel| -> Result<f64> {
        let ab = retrieval_eval(model, &ds.modality_a, &ds.modality_b, ds)?;
        let ba = retrieval_eval(model, &ds.modality_b, &ds.modality_a, ds)?;
        Ok(0.5 * (ab.recall_at_1 + ba.recall_at_1))
    };
    Ok(r(before)? - r(after)?)
}

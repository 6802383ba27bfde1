//! Embedding export for external projection and plotting: one JSON line
//! per test sample per modality side.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::PairedDataset;
use crate::error::{Error, Result};
use crate::model::AlignmentModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub modality: String,
    pub label: u32,
    pub embedding: Vec<f64>,
}

/// Serialize both sides of a dataset's test split. Returns the records in
/// file order; the file is their JSONL rendering.
pub fn embedding_records(
    model: &AlignmentModel,
    ds: &PairedDataset,
) -> Result<Vec<EmbeddingRecord>> {
    let mut records = Vec::with_capacity(2 * ds.n_test());
    for modality in [&ds.modality_a, &ds.modality_b] {
        let raw = ds.test_side(modality).expect("side exists by construction");
        let emb = model.embed_modality(modality, raw)?;
        for i in 0..emb.rows() {
            records.push(EmbeddingRecord {
                modality: modality.clone(),
                label: ds.test_labels[i],
                embedding: emb.row(i).to_vec(),
            });
        }
    }
    Ok(records)
}

pub fn dump_embeddings(model: &AlignmentModel, ds: &PairedDataset, path: &Path) -> Result<usize> {
    let records = embedding_records(model, ds)?;
    let mut out = Vec::new();
    for r in &records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    std::fs::write(path, &out).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(records.len())
}

/// Parse a dump back; consumers outside this crate only need a JSONL reader.
pub fn read_embedding_dump(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    text.lines()
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

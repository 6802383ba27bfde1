//! Cross-modality retrieval: rank gallery embeddings by cosine similarity
//! against each query embedding; recall@k is the fraction of queries whose
//! true counterpart lands in the top k.

use serde::{Deserialize, Serialize};

use crate::autodiff::mat::Mat;
use crate::data::PairedDataset;
use crate::error::{Error, Result};
use crate::model::AlignmentModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub query_modality: String,
    pub gallery_modality: String,
    pub gallery_size: usize,
    pub recall_at_1: f64,
    /// None when the gallery has fewer than five items.
    pub recall_at_5: Option<f64>,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return f64::NEG_INFINITY;
    }
    dot / (na * nb)
}

/// recall@k with paired queries/galleries: query row i's true counterpart
/// is gallery row i. Ties resolve by gallery index, deterministically.
pub fn recall_at(queries: &Mat, gallery: &Mat, k: usize) -> Result<f64> {
    let n = gallery.rows();
    if n < k {
        return Err(Error::GalleryTooSmall { gallery: n, k });
    }
    let mut hits = 0usize;
    for i in 0..queries.rows() {
        let q = queries.row(i);
        let own = cosine(q, gallery.row(i));
        // Rank of the true counterpart: one plus the number of strictly
        // better gallery rows (earlier equal rows also outrank it).
        let mut rank = 1usize;
        for j in 0..n {
            if j == i {
                continue;
            }
            let s = cosine(q, gallery.row(j));
            if s > own || (s == own && j < i) {
                rank += 1;
            }
        }
        if rank <= k {
            hits += 1;
        }
    }
    Ok(hits as f64 / queries.rows() as f64)
}

/// Embed a paired dataset's test split on both sides and report retrieval
/// from query modality into gallery modality.
pub fn retrieval_eval(
    model: &AlignmentModel,
    query_modality: &str,
    gallery_modality: &str,
    ds: &PairedDataset,
) -> Result<RetrievalReport> {
    let q_raw = ds
        .test_side(query_modality)
        .ok_or_else(|| Error::UnknownModality {
            name: query_modality.into(),
        })?;
    let g_raw = ds
        .test_side(gallery_modality)
        .ok_or_else(|| Error::UnknownModality {
            name: gallery_modality.into(),
        })?;
    let queries = model.embed_modality(query_modality, q_raw)?;
    let gallery = model.embed_modality(gallery_modality, g_raw)?;
    let recall_at_1 = recall_at(&queries, &gallery, 1)?;
    let recall_at_5 = if gallery.rows() >= 5 {
        Some(recall_at(&queries, &gallery, 5)?)
    } else {
        None
    };
    Ok(RetrievalReport {
        query_modality: query_modality.into(),
        gallery_modality: gallery_modality.into(),
        gallery_size: gallery.rows(),
        recall_at_1,
        recall_at_5,
    })
}

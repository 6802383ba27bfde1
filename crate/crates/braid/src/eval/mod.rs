//! Evaluation harness: one-shot classification (single and fused),
//! cross-modality retrieval, forgetting probes, and embedding export.
//! Everything here is read-only over model snapshots.

pub mod dump;
pub mod forgetting;
pub mod one_shot;
pub mod retrieval;

pub use dump::{dump_embeddings, embedding_records, read_embedding_dump, EmbeddingRecord};
pub use forgetting::forgetting_probe;
pub use one_shot::{
    fusion_eval, one_shot_eval, one_shot_on_embeddings, HeadProtocol, OneShotOutcome, OneShotTask,
};
pub use retrieval::{recall_at, retrieval_eval, RetrievalReport};

//! Building a fresh model from a topology description.

use crate::data::Topology;
use crate::error::Result;
use crate::model::{
    init_concept_module, AlignmentModel, EncoderSpec, FrozenEncoder, Modality, ModalityTower,
};
use crate::rng::derive_seed;
use serde::{Deserialize, Serialize};

/// Shared widths of the alignment network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelDims {
    /// Concept-module output width shared by every tower (d_f).
    pub feature_dim: usize,
    /// Unified embedding width (d_e).
    pub embed_dim: usize,
    pub concept_hidden: usize,
    /// Linear layers in the prototype (2..=4).
    pub prototype_layers: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            feature_dim: 32,
            embed_dim: 16,
            concept_hidden: 32,
            prototype_layers: 2,
        }
    }
}

/// One tower per channel, fresh concept modules, one shared prototype.
/// Encoders are seeded from the master seed per modality — they are part
/// of the synthetic world, like the datasets.
pub fn assemble_model(topo: &Topology, dims: &ModelDims, seed: u64) -> Result<AlignmentModel> {
    let mut model = AlignmentModel::new(
        dims.feature_dim,
        dims.embed_dim,
        dims.prototype_layers,
        seed,
    );
    for ch in &topo.channels {
        let raw_dim = ch.raw_dim(topo.latent.seq_len);
        let encoder_id = format!("{}.enc", ch.modality);
        let encoder = FrozenEncoder::from_spec(EncoderSpec {
            id: encoder_id.clone(),
            in_dim: raw_dim,
            hidden: ch.encoder_hidden,
            out_dim: ch.encoder_out,
            seed: derive_seed(seed, &format!("encoder:{}", ch.modality)),
        });
        let concept = init_concept_module(
            format!("concept.{}", ch.modality),
            ch.encoder_out,
            dims.concept_hidden,
            dims.feature_dim,
            derive_seed(seed, &format!("concept:{}", ch.modality)),
        );
        model.add_tower(ModalityTower::new(
            Modality {
                name: ch.modality.clone(),
                raw_dim,
                encoder_ids: vec![encoder_id],
            },
            encoder,
            concept,
        ))?;
    }
    Ok(model)
}

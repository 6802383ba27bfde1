//! Modalities, concept-alignment modules, and modality towers.

use serde::{Deserialize, Serialize};

use crate::autodiff::mat::Mat;
use crate::autodiff::{Tape, TensorId};
use crate::error::{Error, Result};
use crate::model::encoder::FrozenEncoder;
use crate::model::mlp::Mlp;
use crate::model::prototype::PrototypeNetwork;

/// A raw-signal space bound to one or more encoders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Modality {
    pub name: String,
    pub raw_dim: usize,
    pub encoder_ids: Vec<String>,
}

/// The trainable projection from encoder features into the shared feature
/// width: a two-layer perceptron.
#[derive(Clone, Debug)]
pub struct ConceptAlignmentModule {
    pub mlp: Mlp,
}

impl ConceptAlignmentModule {
    pub fn out_dim(&self) -> usize {
        self.mlp.out_dim()
    }
}

/// Build a concept module with fan-in-scaled uniform weights and zero
/// biases, reproducible from the seed.
pub fn init_concept_module(
    name: impl Into<String>,
    in_dim: usize,
    hidden: usize,
    out_dim: usize,
    seed: u64,
) -> ConceptAlignmentModule {
    assert!(in_dim > 0 && hidden > 0 && out_dim > 0, "zero-width concept module");
    ConceptAlignmentModule {
        mlp: Mlp::new(name, &[in_dim, hidden, out_dim], seed, true),
    }
}

/// Frozen encoder plus trainable concept module for one modality.
#[derive(Clone, Debug)]
pub struct ModalityTower {
    pub modality: Modality,
    pub encoder: FrozenEncoder,
    pub concept: ConceptAlignmentModule,
}

impl ModalityTower {
    pub fn new(modality: Modality, encoder: FrozenEncoder, concept: ConceptAlignmentModule) -> Self {
        assert_eq!(
            encoder.spec.in_dim, modality.raw_dim,
            "encoder input width must match the modality's raw width"
        );
        assert_eq!(
            encoder.out_dim(),
            concept.mlp.in_dim(),
            "concept module input must match the encoder output width"
        );
        ModalityTower {
            modality,
            encoder,
            concept,
        }
    }

    /// Unique key: modality name, qualified by encoder id for augmented
    /// towers ("wifi/vit" style).
    pub fn key(&self) -> String {
        if self.modality.encoder_ids.len() > 1 {
            format!("{}/{}", self.modality.name, self.encoder.id())
        } else {
            self.modality.name.clone()
        }
    }

    fn check_batch(&self, batch: &Mat) -> Result<()> {
        if batch.cols() != self.modality.raw_dim {
            return Err(Error::DimensionMismatch {
                what: format!("batch for modality '{}'", self.modality.name),
                expected: self.modality.raw_dim,
                got: batch.cols(),
            });
        }
        Ok(())
    }

    /// Pre-prototype features, gradient-free.
    pub fn features_value(&self, batch: &Mat) -> Result<Mat> {
        self.check_batch(batch)?;
        let enc = self.encoder.encode(batch)?;
        self.concept.mlp.forward_value(&enc)
    }

    /// Pre-prototype features on a tape. The encoder output enters as a
    /// plain leaf — no gradient ever reaches encoder parameters.
    pub fn features_tape(&self, tape: &mut Tape, batch: &Mat) -> Result<TensorId> {
        self.check_batch(batch)?;
        let enc = self.encoder.encode(batch)?;
        let enc_id = tape.leaf(enc);
        self.concept.mlp.forward_tape(tape, enc_id)
    }
}

/// Unified-space embeddings for a batch, gradient-free (`training = false`:
/// no tape exists anywhere on this path).
pub fn embed_value(
    tower: &ModalityTower,
    prototype: &PrototypeNetwork,
    batch: &Mat,
) -> Result<Mat> {
    let features = tower.features_value(batch)?;
    prototype.forward_value(&features)
}

/// Unified-space embeddings recorded on a tape (`training = true`).
pub fn embed_tape(
    tape: &mut Tape,
    tower: &ModalityTower,
    prototype: &PrototypeNetwork,
    batch: &Mat,
) -> Result<TensorId> {
    let features = tower.features_tape(tape, batch)?;
    prototype.forward_tape(tape, features)
}

/// Intra-modality self-pairing produced by tower augmentation: positives
/// are the same raw sample seen through the two towers, negatives are all
/// cross-sample combinations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfPairingSpec {
    pub modality: String,
    pub tower_keys: Vec<String>,
}

/// Augment a modality with multiple encoders: one tower per encoder plus
/// the self-pairing descriptor used to align them.
pub fn augment_tower(
    modality: &Modality,
    encoders: Vec<FrozenEncoder>,
    concept_hidden: usize,
    feature_dim: usize,
    seed: u64,
) -> Result<(Vec<ModalityTower>, SelfPairingSpec)> {
    if encoders.len() < 2 {
        return Err(Error::TooFewEncoders { got: encoders.len() });
    }
    for enc in &encoders {
        if enc.spec.in_dim != modality.raw_dim {
            return Err(Error::DimensionMismatch {
                what: format!("encoder '{}' for modality '{}'", enc.id(), modality.name),
                expected: modality.raw_dim,
                got: enc.spec.in_dim,
            });
        }
    }
    let mut augmented = modality.clone();
    augmented.encoder_ids = encoders.iter().map(|e| e.id().to_string()).collect();

    let mut towers = Vec::new();
    for (i, enc) in encoders.into_iter().enumerate() {
        let name = format!("concept.{}/{}", modality.name, enc.id());
        let concept = init_concept_module(
            name,
            enc.out_dim(),
            concept_hidden,
            feature_dim,
            crate::rng::derive_seed_indexed(seed, "augment-concept", i as u64),
        );
        towers.push(ModalityTower::new(augmented.clone(), enc, concept));
    }
    let spec = SelfPairingSpec {
        modality: modality.name.clone(),
        tower_keys: towers.iter().map(|t| t.key()).collect(),
    };
    Ok((towers, spec))
}

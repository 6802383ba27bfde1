//! Modality towers, the shared prototype network, and the assembled model.

pub mod encoder;
pub mod mlp;
pub mod prototype;
pub mod tower;

pub use encoder::{EncoderSpec, FrozenEncoder};
pub use mlp::Mlp;
pub use prototype::PrototypeNetwork;
pub use tower::{
    augment_tower, embed_tape, embed_value, init_concept_module, ConceptAlignmentModule, Modality,
    ModalityTower, SelfPairingSpec,
};

use std::collections::BTreeMap;

use crate::autodiff::mat::{self, Mat};
use crate::autodiff::ParameterGroup;
use crate::error::{Error, Result};

/// The whole alignment network: every tower plus the one shared prototype.
#[derive(Clone, Debug)]
pub struct AlignmentModel {
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub towers: Vec<ModalityTower>,
    pub prototype: PrototypeNetwork,
    /// Modalities merged into the trunk so far, in alignment order.
    pub aligned: Vec<String>,
}

impl AlignmentModel {
    pub fn new(feature_dim: usize, embed_dim: usize, prototype_layers: usize, seed: u64) -> Self {
        AlignmentModel {
            feature_dim,
            embed_dim,
            towers: Vec::new(),
            prototype: PrototypeNetwork::new(
                feature_dim,
                embed_dim,
                prototype_layers,
                crate::rng::derive_seed(seed, "prototype"),
            ),
            aligned: Vec::new(),
        }
    }

    /// Register a tower. Rejects concept modules whose output width differs
    /// from the model's shared feature width, and duplicate tower keys.
    pub fn add_tower(&mut self, tower: ModalityTower) -> Result<()> {
        if tower.concept.out_dim() != self.feature_dim {
            return Err(Error::ConceptWidthMismatch {
                expected: self.feature_dim,
                got: tower.concept.out_dim(),
            });
        }
        if self.towers.iter().any(|t| t.key() == tower.key()) {
            return Err(Error::InvalidConfig(format!(
                "duplicate tower key '{}'",
                tower.key()
            )));
        }
        self.towers.push(tower);
        Ok(())
    }

    pub fn tower_by_key(&self, key: &str) -> Result<&ModalityTower> {
        self.towers
            .iter()
            .find(|t| t.key() == key)
            .ok_or_else(|| Error::UnknownModality { name: key.into() })
    }

    /// The towers serving one modality (more than one after augmentation).
    pub fn towers_of(&self, modality: &str) -> Vec<&ModalityTower> {
        self.towers
            .iter()
            .filter(|t| t.modality.name == modality)
            .collect()
    }

    /// The single tower of a modality; growth phases train one tower per
    /// modality, so multiple matches are resolved to the first.
    pub fn tower_of(&self, modality: &str) -> Result<&ModalityTower> {
        self.towers
            .iter()
            .find(|t| t.modality.name == modality)
            .ok_or_else(|| Error::UnknownModality {
                name: modality.into(),
            })
    }

    pub fn is_aligned(&self, modality: &str) -> bool {
        self.aligned.iter().any(|m| m == modality)
    }

    /// Gradient-free unified-space embeddings for a modality batch.
    /// With several augmented towers the embeddings are averaged, the
    /// simplest order-invariant fusion (concatenation would also work but
    /// changes the embedding width per modality).
    pub fn embed_modality(&self, modality: &str, batch: &Mat) -> Result<Mat> {
        let towers = self.towers_of(modality);
        if towers.is_empty() {
            return Err(Error::UnknownModality {
                name: modality.into(),
            });
        }
        let mut acc: Option<Mat> = None;
        for tower in &towers {
            let e = embed_value(tower, &self.prototype, batch)?;
            acc = Some(match acc {
                None => e,
                Some(a) => mat::add(&a, &e)?,
            });
        }
        Ok(mat::scale(&acc.unwrap(), 1.0 / towers.len() as f64))
    }

    /// Every parameter group in deterministic order: per tower its encoder
    /// then its concept module, and the prototype last.
    pub fn param_groups(&self) -> Vec<&ParameterGroup> {
        let mut groups: Vec<&ParameterGroup> = Vec::new();
        for t in &self.towers {
            groups.push(&t.encoder.params);
            groups.push(&t.concept.mlp.group);
        }
        groups.push(&self.prototype.mlp.group);
        groups
    }

    pub fn param_groups_mut(&mut self) -> Vec<&mut ParameterGroup> {
        let mut groups: Vec<&mut ParameterGroup> = Vec::new();
        for t in &mut self.towers {
            groups.push(&mut t.encoder.params);
            groups.push(&mut t.concept.mlp.group);
        }
        groups.push(&mut self.prototype.mlp.group);
        groups
    }

    /// Mark exactly the named groups trainable; everything else (except
    /// encoders, which are never trainable) is frozen.
    pub fn set_trainable(&mut self, group_names: &[String]) {
        for t in &mut self.towers {
            let g = &mut t.concept.mlp.group;
            g.trainable = group_names.iter().any(|n| n == &g.name);
        }
        let p = &mut self.prototype.mlp.group;
        p.trainable = group_names.iter().any(|n| n == &p.name);
    }

    /// Hash every encoder's output on its probe batch; the map key is the
    /// tower key. Used to verify frozen purity across phases.
    pub fn encoder_probe_hashes(&self, probes: &BTreeMap<String, Mat>) -> Result<BTreeMap<String, u64>> {
        let mut out = BTreeMap::new();
        for t in &self.towers {
            if let Some(probe) = probes.get(&t.modality.name) {
                out.insert(t.key(), t.encoder.output_hash(probe)?);
            }
        }
        Ok(out)
    }

    /// Hash of all parameter values (trainable and frozen).
    pub fn params_hash(&self) -> u64 {
        let mut h = crate::hash::Fnv64::new();
        for g in self.param_groups() {
            h.update(&g.content_hash().to_le_bytes());
        }
        h.finish()
    }

    /// Deep snapshot of all trainable state plus EMA/teacher, for pre-phase
    /// restore points.
    pub fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot {
            concepts: self
                .towers
                .iter()
                .map(|t| (t.key(), t.concept.mlp.snapshot()))
                .collect(),
            prototype: self.prototype.mlp.snapshot(),
            ema_shadow: self.prototype.ema_shadow.clone(),
            frozen_teacher: self.prototype.frozen_teacher.clone(),
            aligned: self.aligned.clone(),
        }
    }

    pub fn restore(&mut self, snap: &ModelSnapshot) {
        for (key, params) in &snap.concepts {
            let tower = self
                .towers
                .iter_mut()
                .find(|t| &t.key() == key)
                .expect("snapshot names a tower that no longer exists");
            tower.concept.mlp.restore(params);
        }
        self.prototype.mlp.restore(&snap.prototype);
        self.prototype.ema_shadow = snap.ema_shadow.clone();
        self.prototype.frozen_teacher = snap.frozen_teacher.clone();
        self.aligned = snap.aligned.clone();
    }
}

/// Restorable copy of the model's mutable state.
#[derive(Clone, Debug)]
pub struct ModelSnapshot {
    pub concepts: Vec<(String, Vec<Mat>)>,
    pub prototype: Vec<Mat>,
    pub ema_shadow: Vec<Mat>,
    pub frozen_teacher: Option<Vec<Mat>>,
    pub aligned: Vec<String>,
}

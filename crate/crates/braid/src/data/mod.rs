//! Synthetic partially-paired multi-modal data.
//!
//! A shared latent activity process stands in for the physical events that
//! real sensing rigs would observe. Every paired dataset draws its own
//! fresh events (no event appears in two datasets — the partial-pairing
//! scarcity is built in), renders both modalities of each pair from the
//! same event, and keeps class labels strictly on the side for evaluation:
//! the training path consumes [`PairBatch`](crate::contrastive::PairBatch)
//! values, which carry no labels at all.

pub mod augment;
pub mod format;
pub mod generate;
pub mod topology;

pub use augment::{augment_downsample, augment_segment};
pub use format::{read_dataset, write_dataset};
pub use generate::generate;
pub use topology::{PairSpec, Topology};

use serde::{Deserialize, Serialize};

use crate::autodiff::mat::Mat;

/// The latent activity process behind every synthetic sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentSpec {
    pub num_classes: usize,
    pub latent_dim: usize,
    /// Class means are drawn uniform in ±this.
    pub class_mean_scale: f64,
    /// Pairwise class-mean distance enforced at generation.
    pub min_class_separation: f64,
    /// Within-class spread of the per-event base point.
    pub within_class_scale: f64,
    /// Time steps per event.
    pub seq_len: usize,
    /// Amplitude of the within-event sinusoidal trajectory.
    pub temporal_amp: f64,
}

impl Default for LatentSpec {
    fn default() -> Self {
        LatentSpec {
            num_classes: 10,
            latent_dim: 8,
            class_mean_scale: 1.2,
            min_class_separation: 0.8,
            within_class_scale: 0.2,
            seq_len: 16,
            temporal_amp: 0.25,
        }
    }
}

/// How one modality observes the latent process.
///
/// `info_rank` limits how many latent dimensions the channel sees and
/// `noise_sigma` sets its observation noise; together they make some
/// modalities reliable and others not, which is what the adaptive loss
/// weighting feeds on. The frozen-encoder sizing lives here too: the
/// synthetic world fully describes its own "pre-trained" artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityChannel {
    pub modality: String,
    /// Observation width per time step; the raw width is `seq_len * feat_dim`.
    pub feat_dim: usize,
    pub noise_sigma: f64,
    pub info_rank: usize,
    pub encoder_hidden: usize,
    pub encoder_out: usize,
}

impl ModalityChannel {
    pub fn raw_dim(&self, seq_len: usize) -> usize {
        self.feat_dim * seq_len
    }
}

/// Synchronized sample pairs for exactly two modalities.
///
/// Row `i` of the A-side and row `i` of the B-side render the same latent
/// event. Labels are per-pair and only evaluation reads them.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedDataset {
    pub id: String,
    pub modality_a: String,
    pub modality_b: String,
    pub seq_len: usize,
    pub feat_a: usize,
    pub feat_b: usize,
    pub train_a: Mat,
    pub train_b: Mat,
    pub test_a: Mat,
    pub test_b: Mat,
    pub train_labels: Vec<u32>,
    pub test_labels: Vec<u32>,
    /// Seed of the latent stream that produced this dataset.
    pub latent_seed: u64,
}

impl PairedDataset {
    pub fn n_train(&self) -> usize {
        self.train_a.rows()
    }

    pub fn n_test(&self) -> usize {
        self.test_a.rows()
    }

    pub fn raw_dim_a(&self) -> usize {
        self.train_a.cols()
    }

    pub fn raw_dim_b(&self) -> usize {
        self.train_b.cols()
    }

    /// The two modalities in deterministic order, for pairing-graph lookups.
    pub fn pair_key(&self) -> (String, String) {
        if self.modality_a <= self.modality_b {
            (self.modality_a.clone(), self.modality_b.clone())
        } else {
            (self.modality_b.clone(), self.modality_a.clone())
        }
    }

    /// Raw samples of one of the two sides, test split.
    pub fn test_side(&self, modality: &str) -> Option<&Mat> {
        if modality == self.modality_a {
            Some(&self.test_a)
        } else if modality == self.modality_b {
            Some(&self.test_b)
        } else {
            None
        }
    }
}

/// Keyed store of the datasets a plan trains on.
#[derive(Clone, Debug, Default)]
pub struct DatasetStore {
    datasets: Vec<PairedDataset>,
}

impl DatasetStore {
    pub fn new(datasets: Vec<PairedDataset>) -> crate::Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for d in &datasets {
            if !seen.insert(d.id.clone()) {
                return Err(crate::Error::DuplicateDataset { id: d.id.clone() });
            }
        }
        Ok(DatasetStore { datasets })
    }

    pub fn get(&self, id: &str) -> crate::Result<&PairedDataset> {
        self.datasets
            .iter()
            .find(|d| d.id == id)
            .ok_or_else(|| crate::Error::UnknownDataset { id: id.into() })
    }

    pub fn iter(&self) -> impl Iterator<Item = &PairedDataset> {
        self.datasets.iter()
    }

    pub fn len(&self) -> usize {
        self.datasets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.datasets.is_empty()
    }
}

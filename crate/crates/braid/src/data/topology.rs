//! The structured-text topology file: modalities, channels, pairing graph.

use serde::{Deserialize, Serialize};

use crate::data::{LatentSpec, ModalityChannel};
use crate::error::{Error, Result};

/// One requested paired dataset. `n_train = 0` makes an evaluation-only
/// pair (useful for fusing modalities that never co-occur in training).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub id: String,
    pub a: String,
    pub b: String,
    pub n_train: usize,
    pub n_test: usize,
}

/// Everything the generator needs, as written by/read from a JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub latent: LatentSpec,
    pub channels: Vec<ModalityChannel>,
    pub pairs: Vec<PairSpec>,
}

impl Topology {
    /// Desk-scale mirror of a six-modality pairing graph: five training
    /// pairs forming a spanning tree, plus one evaluation-only pair for a
    /// modality combination never seen together in training.
    ///
    /// Noise sigmas run from video-like (0.05) to Wi-Fi-like (0.5) so that
    /// reliable and unreliable modalities coexist.
    pub fn desk_default(n_train: usize, n_test: usize) -> Self {
        let ch = |modality: &str, feat, noise, rank, hidden, out| ModalityChannel {
            modality: modality.into(),
            feat_dim: feat,
            noise_sigma: noise,
            info_rank: rank,
            encoder_hidden: hidden,
            encoder_out: out,
        };
        let pair = |id: &str, a: &str, b: &str, tr: usize, te: usize| PairSpec {
            id: id.into(),
            a: a.into(),
            b: b.into(),
            n_train: tr,
            n_test: te,
        };
        Topology {
            latent: LatentSpec::default(),
            channels: vec![
                ch("imu", 3, 0.25, 6, 56, 40),
                ch("skel", 3, 0.12, 7, 48, 30),
                ch("video", 8, 0.25, 6, 72, 64),
                ch("wifi", 6, 0.80, 5, 96, 192),
                ch("mmwave", 4, 0.50, 6, 48, 40),
                ch("lidar", 5, 0.20, 7, 56, 36),
            ],
            pairs: vec![
                pair("imu_skel", "imu", "skel", n_train, n_test),
                pair("skel_video", "skel", "video", n_train, n_test),
                pair("wifi_skel", "wifi", "skel", n_train, n_test),
                pair("mmwave_wifi", "mmwave", "wifi", n_train, n_test),
                pair("video_lidar", "video", "lidar", n_train, n_test),
                // Never co-present in training; used by fusion evaluation.
                pair("imu_video_eval", "imu", "video", 0, n_test),
            ],
        }
    }

    /// Three modalities, two training pairs and one evaluation-only pair —
    /// the smallest topology that exercises growth, forgetting, and fusion.
    pub fn desk_small(n_train: usize, n_test: usize) -> Self {
        let mut topo = Self::desk_default(n_train, n_test);
        topo.channels.retain(|c| ["imu", "skel", "video"].contains(&c.modality.as_str()));
        topo.pairs = vec![
            PairSpec {
                id: "imu_skel".into(),
                a: "imu".into(),
                b: "skel".into(),
                n_train,
                n_test,
            },
            PairSpec {
                id: "skel_video".into(),
                a: "skel".into(),
                b: "video".into(),
                n_train,
                n_test,
            },
            PairSpec {
                id: "imu_video_eval".into(),
                a: "imu".into(),
                b: "video".into(),
                n_train: 0,
                n_test,
            },
        ];
        topo
    }

    pub fn channel(&self, modality: &str) -> Result<&ModalityChannel> {
        self.channels
            .iter()
            .find(|c| c.modality == modality)
            .ok_or_else(|| Error::UnknownModality {
                name: modality.into(),
            })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

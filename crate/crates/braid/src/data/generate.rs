//! Rendering paired datasets from the shared latent process.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::mat::Mat;
use crate::data::{LatentSpec, ModalityChannel, PairSpec, PairedDataset, Topology};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

/// Class means with an enforced pairwise separation floor.
pub(crate) fn class_means(latent: &LatentSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(latent.num_classes);
    while means.len() < latent.num_classes {
        let cand: Vec<f64> = (0..latent.latent_dim)
            .map(|_| rng.gen_range(-latent.class_mean_scale..=latent.class_mean_scale))
            .collect();
        let ok = means.iter().all(|m| {
            let d2: f64 = m.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum();
            d2.sqrt() >= latent.min_class_separation
        });
        if ok {
            means.push(cand);
        }
    }
    means
}

/// One latent event: a class, a base point, and a sinusoidal trajectory.
#[derive(Clone, Debug)]
pub(crate) struct LatentEvent {
    pub class: u32,
    /// seq_len x latent_dim trajectory.
    pub z: Mat,
}

pub(crate) fn draw_event(
    latent: &LatentSpec,
    means: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> LatentEvent {
    let class = rng.gen_range(0..latent.num_classes) as u32;
    let mean = &means[class as usize];
    let base: Vec<f64> = mean
        .iter()
        .map(|&m| {
            let eps: f64 = StandardNormal.sample(rng);
            m + latent.within_class_scale * eps
        })
        .collect();
    // Unit direction for the temporal trajectory.
    let mut dir: Vec<f64> = (0..latent.latent_dim)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    dir.iter_mut().for_each(|v| *v /= norm);
    let freq = if rng.gen_bool(0.5) { 1.0 } else { 2.0 };
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);

    let t_count = latent.seq_len;
    let z = Mat::from_fn(t_count, latent.latent_dim, |t, d| {
        let s = (std::f64::consts::TAU * freq * t as f64 / t_count as f64 + phase).sin();
        base[d] + latent.temporal_amp * s * dir[d]
    });
    LatentEvent { class, z }
}

/// Seeded observation map of one channel: obs = A·z̃ + 0.5·tanh(B·z̃),
/// where z̃ keeps only the channel's `info_rank` latent dimensions.
#[derive(Clone, Debug)]
pub struct ChannelMap {
    pub seen_dims: Vec<usize>,
    linear: Mat,
    bent: Mat,
}

impl ChannelMap {
    pub fn new(channel: &ModalityChannel, latent: &LatentSpec, master_seed: u64) -> Self {
        let mut rng = rng_from_seed(derive_seed(
            master_seed,
            &format!("channel:{}", channel.modality),
        ));
        let rank = channel.info_rank.min(latent.latent_dim);
        // Random distinct latent dimensions this channel can see.
        let mut dims: Vec<usize> = (0..latent.latent_dim).collect();
        for i in (1..dims.len()).rev() {
            let j = rng.gen_range(0..=i);
            dims.swap(i, j);
        }
        dims.truncate(rank);
        dims.sort_unstable();
        let limit = (3.0 / rank as f64).sqrt();
        let linear = Mat::uniform(rank, channel.feat_dim, limit, &mut rng);
        let bent = Mat::uniform(rank, channel.feat_dim, limit, &mut rng);
        ChannelMap {
            seen_dims: dims,
            linear,
            bent,
        }
    }

    /// Noise-free pushforward of one latent vector.
    pub fn observe_clean(&self, z: &[f64]) -> Vec<f64> {
        let zs: Vec<f64> = self.seen_dims.iter().map(|&d| z[d]).collect();
        let feat = self.linear.cols();
        let mut out = vec![0.0; feat];
        for (j, o) in out.iter_mut().enumerate() {
            let mut lin = 0.0;
            let mut bnt = 0.0;
            for (k, &zv) in zs.iter().enumerate() {
                lin += zv * self.linear.get(k, j);
                bnt += zv * self.bent.get(k, j);
            }
            *o = lin + 0.5 * bnt.tanh();
        }
        out
    }

    /// Render a full event into a flattened raw sample, adding observation
    /// noise drawn from the given stream.
    pub fn render(
        &self,
        event_z: &Mat,
        noise_sigma: f64,
        rng: &mut ChaCha8Rng,
    ) -> Vec<f64> {
        let feat = self.linear.cols();
        let mut raw = Vec::with_capacity(event_z.rows() * feat);
        for t in 0..event_z.rows() {
            let clean = self.observe_clean(event_z.row(t));
            for v in clean {
                let eta: f64 = StandardNormal.sample(rng);
                raw.push(v + noise_sigma * eta);
            }
        }
        raw
    }
}

/// Generate every requested paired dataset from one master seed.
///
/// Each pair spec draws fresh latent events from its own derived stream, so
/// no event is shared between datasets; within a dataset, row i of both
/// modalities renders the same event.
pub fn generate(
    latent: &LatentSpec,
    channels: &[ModalityChannel],
    pairs: &[PairSpec],
    master_seed: u64,
) -> Result<Vec<PairedDataset>> {
    let mut ids = std::collections::BTreeSet::new();
    for p in pairs {
        if !ids.insert(p.id.clone()) {
            return Err(Error::DuplicateDataset { id: p.id.clone() });
        }
    }
    let channel_of = |name: &str| -> Result<&ModalityChannel> {
        channels
            .iter()
            .find(|c| c.modality == name)
            .ok_or_else(|| Error::UnknownModality { name: name.into() })
    };

    let mut means_rng = rng_from_seed(derive_seed(master_seed, "class-means"));
    let means = class_means(latent, &mut means_rng);

    let mut out = Vec::with_capacity(pairs.len());
    for spec in pairs {
        let ca = channel_of(&spec.a)?;
        let cb = channel_of(&spec.b)?;
        let map_a = ChannelMap::new(ca, latent, master_seed);
        let map_b = ChannelMap::new(cb, latent, master_seed);

        let latent_seed = derive_seed(master_seed, &format!("dataset:{}", spec.id));
        let mut ev_rng = rng_from_seed(latent_seed);
        let mut noise_rng = rng_from_seed(derive_seed(latent_seed, "noise"));

        let total = spec.n_train + spec.n_test;
        let mut rows_a = Vec::with_capacity(total);
        let mut rows_b = Vec::with_capacity(total);
        let mut labels = Vec::with_capacity(total);
        for _ in 0..total {
            let event = draw_event(latent, &means, &mut ev_rng);
            rows_a.push(map_a.render(&event.z, ca.noise_sigma, &mut noise_rng));
            rows_b.push(map_b.render(&event.z, cb.noise_sigma, &mut noise_rng));
            labels.push(event.class);
        }
        let (train_rows_a, test_rows_a) = rows_a.split_at(spec.n_train);
        let (train_rows_b, test_rows_b) = rows_b.split_at(spec.n_train);
        let (train_labels, test_labels) = labels.split_at(spec.n_train);

        out.push(PairedDataset {
            id: spec.id.clone(),
            modality_a: spec.a.clone(),
            modality_b: spec.b.clone(),
            seq_len: latent.seq_len,
            feat_a: ca.feat_dim,
            feat_b: cb.feat_dim,
            train_a: Mat::from_rows(train_rows_a),
            train_b: Mat::from_rows(train_rows_b),
            test_a: Mat::from_rows(test_rows_a),
            test_b: Mat::from_rows(test_rows_b),
            train_labels: train_labels.to_vec(),
            test_labels: test_labels.to_vec(),
            latent_seed,
        })
    }
    Ok(out)
}

/// Convenience wrapper: generate everything a topology file describes.
pub fn generate_topology(topology: &Topology, master_seed: u64) -> Result<Vec<PairedDataset>> {
    generate(
        &topology.latent,
        &topology.channels,
        &topology.pairs,
        master_seed,
    )
}

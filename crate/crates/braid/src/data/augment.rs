//! The two data augmentations: temporal down-sampling and action
//! segmentation. Both act on the time axis of the flattened T x feat
//! samples and always apply the identical transformation to the two
//! modalities of a pair, so synchronization survives augmentation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::mat::Mat;
use crate::data::PairedDataset;
use crate::error::{Error, Result};

/// Evenly spaced kept-frame indices covering both endpoints.
fn decimate_indices(t: usize, keep: usize) -> Vec<usize> {
    debug_assert!(keep >= 2 && keep <= t);
    (0..keep)
        .map(|j| ((j * (t - 1)) as f64 / (keep - 1) as f64).round() as usize)
        .collect()
}

/// Linearly interpolate a sequence of frames back to `t_out` time steps.
/// Exact at integer knot positions, so a full-length input is copied
/// bit-identically.
fn stretch(frames: &[&[f64]], t_out: usize) -> Vec<f64> {
    let t_in = frames.len();
    let feat = frames[0].len();
    let mut out = Vec::with_capacity(t_out * feat);
    if t_in == 1 {
        for _ in 0..t_out {
            out.extend_from_slice(frames[0]);
        }
        return out;
    }
    for t in 0..t_out {
        let pos = t as f64 * (t_in - 1) as f64 / (t_out - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        if frac == 0.0 {
            out.extend_from_slice(frames[lo]);
        } else {
            for (a, b) in frames[lo].iter().zip(frames[hi]) {
                out.push(a + frac * (b - a));
            }
        }
    }
    out
}

fn frames_of(row: &[f64], feat: usize) -> Vec<&[f64]> {
    row.chunks(feat).collect()
}

fn downsample_row(row: &[f64], feat: usize, t: usize, ratio: f64) -> Result<Vec<f64>> {
    let keep = (t as f64 * ratio).floor() as usize;
    if keep < 2 {
        return Err(Error::RatioTooSmall { ratio });
    }
    let frames = frames_of(row, feat);
    let idx = decimate_indices(t, keep);
    let kept: Vec<&[f64]> = idx.iter().map(|&i| frames[i]).collect();
    Ok(stretch(&kept, t))
}

fn crop_row(row: &[f64], feat: usize, t: usize, start: usize, len: usize) -> Vec<f64> {
    let frames = frames_of(row, feat);
    let window: Vec<&[f64]> = frames[start..start + len].to_vec();
    stretch(&window, t)
}

/// Draw one crop window of length ≥ ceil(min_fraction * t).
pub(crate) fn draw_crop_window(
    t: usize,
    min_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> (usize, usize) {
    let min_len = (min_fraction * t as f64).ceil() as usize;
    let min_len = min_len.clamp(1, t);
    let len = rng.gen_range(min_len..=t);
    let start = rng.gen_range(0..=(t - len));
    (start, len)
}

/// Down-sample the training pairs at each ratio, then interpolate back to
/// the original length. The output has `|ratios| * n_train` training pairs
/// (ratio 1.0 contributes identity copies); the test split passes through
/// unchanged.
pub fn augment_downsample(ds: &PairedDataset, ratios: &[f64]) -> Result<PairedDataset> {
    for &r in ratios {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::RatioTooSmall { ratio: r });
        }
    }
    let t = ds.seq_len;
    let mut rows_a = Vec::with_capacity(ratios.len() * ds.n_train());
    let mut rows_b = Vec::with_capacity(ratios.len() * ds.n_train());
    let mut labels = Vec::with_capacity(ratios.len() * ds.n_train());
    for &ratio in ratios {
        for i in 0..ds.n_train() {
            rows_a.push(downsample_row(ds.train_a.row(i), ds.feat_a, t, ratio)?);
            rows_b.push(downsample_row(ds.train_b.row(i), ds.feat_b, t, ratio)?);
            labels.push(ds.train_labels[i]);
        }
    }
    Ok(PairedDataset {
        train_a: Mat::from_rows(&rows_a),
        train_b: Mat::from_rows(&rows_b),
        train_labels: labels,
        ..ds.clone()
    })
}

/// Random contiguous crops of length at least `min_fraction * T`, the same
/// window for both modalities of a pair, stretched back to T. The output
/// has `n_crops * n_train` training pairs.
pub fn augment_segment(
    ds: &PairedDataset,
    min_fraction: f64,
    n_crops: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PairedDataset> {
    if !(min_fraction > 0.0 && min_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "min_fraction must be in (0, 1], got {min_fraction}"
        )));
    }
    let t = ds.seq_len;
    let mut rows_a = Vec::with_capacity(n_crops * ds.n_train());
    let mut rows_b = Vec::with_capacity(n_crops * ds.n_train());
    let mut labels = Vec::with_capacity(n_crops * ds.n_train());
    for _ in 0..n_crops {
        for i in 0..ds.n_train() {
            let (start, len) = draw_crop_window(t, min_fraction, rng);
            rows_a.push(crop_row(ds.train_a.row(i), ds.feat_a, t, start, len));
            rows_b.push(crop_row(ds.train_b.row(i), ds.feat_b, t, start, len));
            labels.push(ds.train_labels[i]);
        }
    }
    Ok(PairedDataset {
        train_a: Mat::from_rows(&rows_a),
        train_b: Mat::from_rows(&rows_b),
        train_labels: labels,
        ..ds.clone()
    })
}

//! Shared test harness: central finite differences against the tape.

use braid::autodiff::mat::Mat;
use braid::autodiff::{Tape, TensorId};
use braid::rng::rng_from_seed;
use rand::Rng;

pub const FD_H: f64 = 1e-5;

/// Central finite-difference gradients of a scalar function of the inputs.
pub fn numeric_grads(f: &mut dyn FnMut(&[Mat]) -> f64, inputs: &[Mat], h: f64) -> Vec<Mat> {
    let mut grads = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let (rows, cols) = inputs[i].shape();
        let mut g = Mat::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                let mut plus = inputs.to_vec();
                plus[i].set(r, c, inputs[i].get(r, c) + h);
                let mut minus = inputs.to_vec();
                minus[i].set(r, c, inputs[i].get(r, c) - h);
                g.set(r, c, (f(&plus) - f(&minus)) / (2.0 * h));
            }
        }
        grads.push(g);
    }
    grads
}

/// Elementwise |a − n| ≤ rel·max(|a|, |n|) + abs.
pub fn assert_grads_close(analytic: &Mat, numeric: &Mat, rel: f64, abs: f64, what: &str) {
    assert_eq!(analytic.shape(), numeric.shape(), "{what}: shape");
    for r in 0..analytic.rows() {
        for c in 0..analytic.cols() {
            let a = analytic.get(r, c);
            let n = numeric.get(r, c);
            let tol = rel * a.abs().max(n.abs()) + abs;
            assert!(
                (a - n).abs() <= tol,
                "{what} at ({r},{c}): analytic {a} vs numeric {n} (tol {tol})"
            );
        }
    }
}

/// Gradient-check a tape construction: `build` turns input leaves into a
/// scalar root. Checks every input's gradient against central differences.
pub fn check_tape_fn(
    what: &str,
    inputs: &[Mat],
    rel: f64,
    build: &dyn Fn(&mut Tape, &[TensorId]) -> TensorId,
) {
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
    let root = build(&mut tape, &ids);
    tape.backward(root).expect("backward failed");
    let analytic: Vec<Mat> = ids.iter().map(|&id| tape.grad(id).clone()).collect();

    let mut eval = |xs: &[Mat]| -> f64 {
        let mut t = Tape::new();
        let ids: Vec<TensorId> = xs.iter().map(|m| t.leaf(m.clone())).collect();
        let root = build(&mut t, &ids);
        t.value(root).scalar()
    };
    let numeric = numeric_grads(&mut eval, inputs, FD_H);
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        assert_grads_close(a, n, rel, 1e-9, &format!("{what} input {i}"));
    }
}

/// Random matrix with entries in [lo, hi].
pub fn random_mat(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> Mat {
    let mut rng = rng_from_seed(seed);
    Mat::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
}

/// Random matrix with entries bounded away from zero (for relu kinks).
pub fn random_mat_away_from_zero(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut rng = rng_from_seed(seed);
    Mat::from_fn(rows, cols, |_, _| {
        let mag: f64 = rng.gen_range(0.05..2.0);
        if rng.gen_bool(0.5) {
            mag
        } else {
            -mag
        }
    })
}

/// Random shape in a small range, seeded.
pub fn random_shape(seed: u64, max: usize) -> (usize, usize) {
    let mut rng = rng_from_seed(seed ^ 0x9e3779b97f4a7c15);
    (rng.gen_range(1..=max), rng.gen_range(1..=max))
}

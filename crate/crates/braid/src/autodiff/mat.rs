//! Dense row-major 2-D arrays of f64 and the forward kernels shared by the
//! tape and the gradient-free inference path.
//!
//! Everything is single-threaded and allocation-honest; at desk scale the
//! largest matrix in play is a batch of a few hundred rows.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::fnv64_f64s;

/// Dense matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    /// Identity matrix.
    pub fn eye(n: usize) -> Self {
        Mat::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    /// Entries drawn uniformly from [-limit, limit].
    pub fn uniform(rows: usize, cols: usize, limit: f64, rng: &mut impl Rng) -> Self {
        Mat::from_fn(rows, cols, |_, _| rng.gen_range(-limit..=limit))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The single entry of a 1x1 matrix.
    pub fn scalar(&self) -> f64 {
        assert_eq!(self.shape(), (1, 1), "scalar() on a {}x{} matrix", self.rows, self.cols);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bit-level content hash (shape included).
    pub fn content_hash(&self) -> u64 {
        let mut h = crate::hash::Fnv64::new();
        h.update(&(self.rows as u64).to_le_bytes());
        h.update(&(self.cols as u64).to_le_bytes());
        h.update(&fnv64_f64s(&self.data).to_le_bytes());
        h.finish()
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// self += other * scale, shapes must match.
    pub fn add_scaled(&mut self, other: &Mat, scale: f64) {
        assert_eq!(self.shape(), other.shape(), "add_scaled shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * scale;
        }
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Select rows by index into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Mat {
        let mut out = Mat::zeros(indices.len(), self.cols);
        for (i, &idx) in indices.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.row(idx));
        }
        out
    }

    /// Horizontal concatenation: [self | other], row counts must match.
    pub fn concat_cols(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "concat_cols row mismatch");
        let mut out = Mat::zeros(self.rows, self.cols + other.cols);
        for r in 0..self.rows {
            out.row_mut(r)[..self.cols].copy_from_slice(self.row(r));
            out.row_mut(r)[self.cols..].copy_from_slice(other.row(r));
        }
        out
    }

    fn shape_err(op: &'static str, a: &Mat, b: &Mat) -> Error {
        Error::ShapeMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        }
    }
}

// ---- forward kernels -------------------------------------------------------

pub fn matmul(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.cols != b.rows {
        return Err(Mat::shape_err("matmul", a, b));
    }
    let mut out = Mat::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a.get(i, k);
            if aik == 0.0 {
                continue;
            }
            let brow = b.row(k);
            let orow = out.row_mut(i);
            for j in 0..b.cols {
                orow[j] += aik * brow[j];
            }
        }
    }
    Ok(out)
}

pub fn add(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.shape() != b.shape() {
        return Err(Mat::shape_err("add", a, b));
    }
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
    Ok(Mat { rows: a.rows, cols: a.cols, data })
}

pub fn sub(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.shape() != b.shape() {
        return Err(Mat::shape_err("sub", a, b));
    }
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect();
    Ok(Mat { rows: a.rows, cols: a.cols, data })
}

/// Elementwise (Hadamard) product.
pub fn mul(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.shape() != b.shape() {
        return Err(Mat::shape_err("mul", a, b));
    }
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
    Ok(Mat { rows: a.rows, cols: a.cols, data })
}

pub fn scale(a: &Mat, c: f64) -> Mat {
    a.map(|v| v * c)
}

/// Broadcast-add a 1xD bias row onto every row of an MxD matrix.
pub fn add_bias(x: &Mat, bias: &Mat) -> Result<Mat> {
    if bias.rows != 1 || bias.cols != x.cols {
        return Err(Mat::shape_err("add_bias", x, bias));
    }
    let mut out = x.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        for (v, b) in row.iter_mut().zip(bias.row(0)) {
            *v += b;
        }
    }
    Ok(out)
}

pub fn relu(a: &Mat) -> Mat {
    a.map(|v| if v > 0.0 { v } else { 0.0 })
}

pub fn tanh(a: &Mat) -> Mat {
    a.map(f64::tanh)
}

pub fn exp(a: &Mat) -> Mat {
    a.map(f64::exp)
}

pub fn log(a: &Mat) -> Mat {
    a.map(f64::ln)
}

/// Row-wise softmax with max subtraction.
pub fn row_softmax(a: &Mat) -> Mat {
    let mut out = a.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Row-wise log-sum-exp with max subtraction; returns an Mx1 column.
pub fn row_logsumexp(a: &Mat) -> Mat {
    let mut out = Mat::zeros(a.rows, 1);
    for r in 0..a.rows {
        let row = a.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        out.set(r, 0, max + sum.ln());
    }
    out
}

/// L2-normalize every row. Errors on the first zero-norm row.
pub fn l2_normalize_rows(a: &Mat) -> Result<Mat> {
    let mut out = a.clone();
    for r in 0..out.rows {
        let norm = row_norm(a.row(r));
        if norm == 0.0 {
            return Err(Error::ZeroNormRow { row: r });
        }
        for v in out.row_mut(r) {
            *v /= norm;
        }
    }
    Ok(out)
}

pub(crate) fn row_norm(row: &[f64]) -> f64 {
    row.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Sum of all entries, as a 1x1 matrix.
pub fn sum(a: &Mat) -> Mat {
    Mat::from_vec(1, 1, vec![a.data.iter().sum()])
}

//! Define-by-run reverse-mode differentiation over [`Mat`] values.
//!
//! A [`Tape`] is rebuilt for every batch: forward calls append nodes, and
//! [`Tape::backward`] walks them in reverse, accumulating exact analytic
//! gradients. Parameters enter the tape as leaves via [`Tape::param`], which
//! remembers the owning group so [`Tape::flush_grads`] can add the leaf
//! gradients back into the [`ParameterGroup`] buffers after backward.
//!
//! Gradient accumulation is additive throughout: running backward twice
//! from the same root doubles the gradients, and two roots backward-ed in
//! sequence accumulate the gradient of their sum. [`Tape::zero_grads`]
//! resets the tape buffers explicitly.

use crate::autodiff::mat::{self, Mat};
use crate::autodiff::param::ParameterGroup;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TensorId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddBias(usize, usize),
    Scale(usize, f64),
    Relu(usize),
    Tanh(usize),
    Exp(usize),
    Log(usize),
    Transpose(usize),
    RowSoftmax(usize),
    RowLogSumExp(usize),
    L2NormalizeRows(usize),
    Sum(usize),
}

struct Node {
    value: Mat,
    grad: Mat,
    op: Op,
}

/// Link from a tape leaf back to the parameter tensor it was leased from.
struct ParamLink {
    node: usize,
    group: String,
    index: usize,
}

/// The computation record for one forward/backward cycle.
pub struct Tape {
    nodes: Vec<Node>,
    links: Vec<ParamLink>,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            links: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record a constant or input leaf. No gradient flows out of the tape
    /// for plain leaves; use [`Tape::param`] for trainable tensors.
    pub fn leaf(&mut self, value: Mat) -> TensorId {
        self.push(value, Op::Leaf)
    }

    /// Lease one tensor of a parameter group onto the tape.
    ///
    /// The value is copied; after backward, [`Tape::flush_grads`] adds this
    /// leaf's gradient into the group's gradient buffer. Leasing the same
    /// tensor twice is fine — both leaves contribute additively, which is
    /// exactly the chain rule for shared parameters.
    pub fn param(&mut self, group: &ParameterGroup, index: usize) -> TensorId {
        let id = self.push(group.tensors[index].value.clone(), Op::Leaf);
        self.links.push(ParamLink {
            node: id.0,
            group: group.name.clone(),
            index,
        });
        id
    }

    pub fn value(&self, id: TensorId) -> &Mat {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: TensorId) -> &Mat {
        &self.nodes[id.0].grad
    }

    fn push(&mut self, value: Mat, op: Op) -> TensorId {
        let grad = Mat::zeros(value.rows(), value.cols());
        self.nodes.push(Node { value, grad, op });
        TensorId(self.nodes.len() - 1)
    }

    fn push_checked(&mut self, value: Mat, op: Op, name: &'static str) -> Result<TensorId> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        Ok(self.push(value, op))
    }

    // ---- recorded operations ------------------------------------------

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let v = mat::matmul(self.value(a), self.value(b))?;
        self.push_checked(v, Op::Matmul(a.0, b.0), "matmul")
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let v = mat::add(self.value(a), self.value(b))?;
        self.push_checked(v, Op::Add(a.0, b.0), "add")
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let v = mat::sub(self.value(a), self.value(b))?;
        self.push_checked(v, Op::Sub(a.0, b.0), "sub")
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let v = mat::mul(self.value(a), self.value(b))?;
        self.push_checked(v, Op::Mul(a.0, b.0), "mul")
    }

    /// Broadcast-add a 1xD bias to every row of an MxD input.
    pub fn add_bias(&mut self, x: TensorId, bias: TensorId) -> Result<TensorId> {
        let v = mat::add_bias(self.value(x), self.value(bias))?;
        self.push_checked(v, Op::AddBias(x.0, bias.0), "add_bias")
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> Result<TensorId> {
        let v = mat::scale(self.value(a), c);
        self.push_checked(v, Op::Scale(a.0, c), "scale")
    }

    pub fn relu(&mut self, a: TensorId) -> Result<TensorId> {
        let v = mat::relu(self.value(a));
        self.push_checked(v, Op::Relu(a.0), "relu")
    }

    pub fn tanh(&mut self, a: TensorId) -> Result<TensorId> {
        let v = mat::tanh(self.value(a));
        self.push_checked(v, Op::Tanh(a.0), "tanh")
    }

    pub fn exp(&mut self, a: TensorId) -> Result<TensorId> {
        let v = mat::exp(self.value(a));
        self.push_checked(v, Op::Exp(a.0), "exp")
    }

    pub fn log(&mut self, a: TensorId) -> Result<TensorId> {
        let v = mat::log(self.value(a));
        self.push_checked(v, Op::Log(a.0), "log")
    }

    pub fn transpose(&mut self, a: TensorId) -> Result<TensorId> {
        let v = self.value(a).transpose();
        self.push_checked(v, Op::Transpose(a.0), "transpose")
    }

    /// Row-wise softmax, log-sum-exp stabilized.
    pub fn row_softmax(&mut self, a: TensorId) -> Result<TensorId> {
        let v = mat::row_softmax(self.value(a));
        self.push_checked(v, Op::RowSoftmax(a.0), "row_softmax")
    }

    /// Row-wise log-sum-exp; returns an Mx1 column.
    pub fn row_logsumexp(&mut self, a: TensorId) -> Result<TensorId> {
        let v = mat::row_logsumexp(self.value(a));
        self.push_checked(v, Op::RowLogSumExp(a.0), "row_logsumexp")
    }

    /// L2-normalize rows; errors on a zero-norm row, naming its index.
    pub fn l2_normalize_rows(&mut self, a: TensorId) -> Result<TensorId> {
        let v = mat::l2_normalize_rows(self.value(a))?;
        self.push_checked(v, Op::L2NormalizeRows(a.0), "l2_normalize_rows")
    }

    /// Sum of all entries as a 1x1 node.
    pub fn sum(&mut self, a: TensorId) -> Result<TensorId> {
        let v = mat::sum(self.value(a));
        self.push_checked(v, Op::Sum(a.0), "sum")
    }

    /// Cosine-similarity matrix between the rows of A (NxD) and B (MxD):
    /// entry (i, j) is cos(A_i, B_j). Composed from differentiable
    /// primitives; errors on any zero-norm row.
    pub fn cosine_similarity(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let an = self.l2_normalize_rows(a)?;
        let bn = self.l2_normalize_rows(b)?;
        let bt = self.transpose(bn)?;
        self.matmul(an, bt)
    }

    /// Mean squared difference between two same-shape nodes, as a 1x1 node.
    pub fn mse(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        let total = self.sum(sq)?;
        let n = self.value(a).rows() * self.value(a).cols();
        self.scale(total, 1.0 / n as f64)
    }

    // ---- backward -------------------------------------------------------

    /// Zero every gradient buffer on the tape.
    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad.fill(0.0);
        }
    }

    /// Backpropagate from a scalar (1x1) root.
    ///
    /// Propagation runs in scratch buffers seeded with 1 at the root, and
    /// the result is added into the persistent gradients, so consecutive
    /// backward calls accumulate exactly the sum of their individual
    /// gradients regardless of what is already on the tape.
    pub fn backward(&mut self, root: TensorId) -> Result<()> {
        if self.nodes[root.0].value.shape() != (1, 1) {
            return Err(Error::ShapeMismatch {
                op: "backward root must be 1x1",
                left: self.nodes[root.0].value.shape(),
                right: (1, 1),
            });
        }
        let mut scratch: Vec<Mat> = self
            .nodes
            .iter()
            .map(|n| Mat::zeros(n.value.rows(), n.value.cols()))
            .collect();
        scratch[root.0].set(0, 0, 1.0);

        for i in (0..=root.0).rev() {
            let upstream = scratch[i].clone();
            match self.nodes[i].op {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let bt = self.nodes[b].value.transpose();
                    let da = mat::matmul(&upstream, &bt)?;
                    scratch[a].add_scaled(&da, 1.0);
                    let at = self.nodes[a].value.transpose();
                    let db = mat::matmul(&at, &upstream)?;
                    scratch[b].add_scaled(&db, 1.0);
                }
                Op::Add(a, b) => {
                    scratch[a].add_scaled(&upstream, 1.0);
                    scratch[b].add_scaled(&upstream, 1.0);
                }
                Op::Sub(a, b) => {
                    scratch[a].add_scaled(&upstream, 1.0);
                    scratch[b].add_scaled(&upstream, -1.0);
                }
                Op::Mul(a, b) => {
                    let da = mat::mul(&upstream, &self.nodes[b].value)?;
                    scratch[a].add_scaled(&da, 1.0);
                    let db = mat::mul(&upstream, &self.nodes[a].value)?;
                    scratch[b].add_scaled(&db, 1.0);
                }
                Op::AddBias(x, b) => {
                    scratch[x].add_scaled(&upstream, 1.0);
                    let cols = upstream.cols();
                    let mut db = Mat::zeros(1, cols);
                    for r in 0..upstream.rows() {
                        for c in 0..cols {
                            db.set(0, c, db.get(0, c) + upstream.get(r, c));
                        }
                    }
                    scratch[b].add_scaled(&db, 1.0);
                }
                Op::Scale(a, c) => {
                    scratch[a].add_scaled(&upstream, c);
                }
                Op::Relu(a) => {
                    let mask = self.nodes[a].value.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    let da = mat::mul(&upstream, &mask)?;
                    scratch[a].add_scaled(&da, 1.0);
                }
                Op::Tanh(a) => {
                    let dtanh = self.nodes[i].value.map(|y| 1.0 - y * y);
                    let da = mat::mul(&upstream, &dtanh)?;
                    scratch[a].add_scaled(&da, 1.0);
                }
                Op::Exp(a) => {
                    let da = mat::mul(&upstream, &self.nodes[i].value)?;
                    scratch[a].add_scaled(&da, 1.0);
                }
                Op::Log(a) => {
                    let inv = self.nodes[a].value.map(|v| 1.0 / v);
                    let da = mat::mul(&upstream, &inv)?;
                    scratch[a].add_scaled(&da, 1.0);
                }
                Op::Transpose(a) => {
                    scratch[a].add_scaled(&upstream.transpose(), 1.0);
                }
                Op::RowSoftmax(a) => {
                    // dx_r = (dy_r − dot(dy_r, y_r)) ⊙ y_r, per row.
                    let y = &self.nodes[i].value;
                    let mut da = Mat::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 = upstream
                            .row(r)
                            .iter()
                            .zip(y.row(r))
                            .map(|(g, p)| g * p)
                            .sum();
                        for c in 0..y.cols() {
                            da.set(r, c, (upstream.get(r, c) - dot) * y.get(r, c));
                        }
                    }
                    scratch[a].add_scaled(&da, 1.0);
                }
                Op::RowLogSumExp(a) => {
                    // d/dx_rc = softmax(x_r)_c * upstream_r
                    let soft = mat::row_softmax(&self.nodes[a].value);
                    let mut da = Mat::zeros(soft.rows(), soft.cols());
                    for r in 0..soft.rows() {
                        let g = upstream.get(r, 0);
                        for c in 0..soft.cols() {
                            da.set(r, c, g * soft.get(r, c));
                        }
                    }
                    scratch[a].add_scaled(&da, 1.0);
                }
                Op::L2NormalizeRows(a) => {
                    // y = x/‖x‖ per row; dx_r = (dy_r − dot(dy_r, y_r)·y_r)/‖x_r‖
                    let x = &self.nodes[a].value;
                    let y = &self.nodes[i].value;
                    let mut da = Mat::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        let norm = mat::row_norm(x.row(r));
                        let dot: f64 = upstream
                            .row(r)
                            .iter()
                            .zip(y.row(r))
                            .map(|(g, u)| g * u)
                            .sum();
                        for c in 0..x.cols() {
                            da.set(r, c, (upstream.get(r, c) - dot * y.get(r, c)) / norm);
                        }
                    }
                    scratch[a].add_scaled(&da, 1.0);
                }
                Op::Sum(a) => {
                    let g = upstream.get(0, 0);
                    let shape = self.nodes[a].value.shape();
                    let ones = Mat::from_fn(shape.0, shape.1, |_, _| 1.0);
                    scratch[a].add_scaled(&ones, g);
                }
            }
        }
        for (node, s) in self.nodes.iter_mut().zip(&scratch) {
            node.grad.add_scaled(s, 1.0);
        }
        Ok(())
    }

    /// Add every leased leaf's gradient into its owning group's buffer.
    ///
    /// The slice must contain every group that was leased onto this tape;
    /// a missing group is a wiring bug and reported as such.
    pub fn flush_grads(&self, groups: &mut [&mut ParameterGroup]) -> Result<()> {
        for link in &self.links {
            let group = groups
                .iter_mut()
                .find(|g| g.name == link.group)
                .ok_or_else(|| Error::NoGradient {
                    group: format!("{} (leased on tape but not offered to flush_grads)", link.group),
                })?;
            group.tensors[link.index].accumulate_grad(&self.nodes[link.node].grad);
        }
        Ok(())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

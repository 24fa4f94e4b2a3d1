//! Reverse-mode tape.
//!
//! A forward pass records every operation on a [`Tape`]; [`Tape::backward`]
//! walks the records in reverse, accumulates gradients, flushes them into
//! the [`ParamStore`] leaves that participated, and clears the tape. One
//! tape is single-threaded; independent tapes (one per CV fold) may run in
//! parallel.

use super::mat::Mat;
use super::optim::ParamStore;
use super::rng;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: ({0}, {1}) vs ({2}, {3})", .lhs.0, .lhs.1, .rhs.0, .rhs.1)]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("loss must be a scalar, got ({0}, {1})", .shape.0, .shape.1)]
    NonScalarLoss { shape: (usize, usize) },
    #[error("segment {0} is empty")]
    EmptySegment(usize),
    #[error("segment id {id} out of range (num_segments {num})")]
    SegmentOutOfRange { id: usize, num: usize },
    #[error("gather index {idx} out of range ({rows} rows)")]
    GatherOutOfRange { idx: usize, rows: usize },
    #[error("slice [{start}, {start_plus_len}) out of range ({cols} cols)", start_plus_len = .start + .len)]
    SliceOutOfRange {
        start: usize,
        len: usize,
        cols: usize,
    },
}

pub type NodeId = usize;

enum Op {
    Leaf,
    /// Leaf backed by a parameter slot; gradients flush into the store.
    Param(usize),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// rhs is a [1, cols] bias broadcast over rows.
    AddBias(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// rhs is a [rows, 1] column broadcast over columns.
    MulColVec(NodeId, NodeId),
    /// Per-row dot product -> [rows, 1].
    RowDot(NodeId, NodeId),
    Scale(NodeId, f64),
    ConcatCols(Vec<(NodeId, usize)>),
    SliceCols(NodeId, usize, usize),
    Sigmoid(NodeId),
    Silu(NodeId),
    Exp(NodeId),
    Log(NodeId),
    LeakyRelu(NodeId, f64),
    Dropout(NodeId, Vec<f64>),
    SoftmaxSegments(NodeId, Arc<Vec<usize>>),
    SegmentSum(NodeId, Arc<Vec<usize>>),
    SegmentMean(NodeId, Arc<Vec<usize>>, usize),
    /// Stored argmax row per (segment, column) for the backward route.
    SegmentMax(NodeId, Vec<usize>),
    GatherRows(NodeId, Arc<Vec<usize>>),
    /// Row-major reinterpretation with the same element count.
    Reshape(NodeId),
    /// Mean of squared differences against a constant target.
    MseLoss(NodeId, Mat),
}

struct Node {
    op: Op,
    value: Mat,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    /// True during training: dropout active. Evaluation leaves inputs as-is.
    pub training: bool,
    /// Global seed and step for counter-based dropout masks.
    pub seed: u64,
    pub step: u64,
}

impl Tape {
    pub fn new(seed: u64) -> Self {
        Tape {
            nodes: Vec::new(),
            training: false,
            seed,
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id].value
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id].value.shape()
    }

    fn push(&mut self, op: Op, value: Mat) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    pub fn constant(&mut self, value: Mat) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.constant(Mat::scalar(v))
    }

    /// Lease a parameter onto the tape; backward() accumulates its gradient
    /// back into the store.
    pub fn param(&mut self, store: &ParamStore, id: usize) -> NodeId {
        self.push(Op::Param(id), store.value(id).clone())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != br {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                lhs: (ar, ac),
                rhs: (br, bc),
            });
        }
        let value = self.nodes[a].value.matmul(&self.nodes[b].value);
        Ok(self.push(Op::MatMul(a, b), value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(AutodiffError::ShapeMismatch {
                op: "add",
                lhs: self.shape(a),
                rhs: self.shape(b),
            });
        }
        let mut value = self.nodes[a].value.clone();
        value.add_assign(&self.nodes[b].value);
        Ok(self.push(Op::Add(a, b), value))
    }

    /// a[m,n] + bias[1,n] broadcast over rows.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, AutodiffError> {
        let (_, ac) = self.shape(a);
        let (br, bc) = self.shape(bias);
        if br != 1 || bc != ac {
            return Err(AutodiffError::ShapeMismatch {
                op: "add_bias",
                lhs: self.shape(a),
                rhs: (br, bc),
            });
        }
        let mut value = self.nodes[a].value.clone();
        let bvals = self.nodes[bias].value.data.clone();
        for r in 0..value.rows {
            for (v, b) in value.row_mut(r).iter_mut().zip(&bvals) {
                *v += b;
            }
        }
        Ok(self.push(Op::AddBias(a, bias), value))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(AutodiffError::ShapeMismatch {
                op: "mul",
                lhs: self.shape(a),
                rhs: self.shape(b),
            });
        }
        let value = Mat {
            rows: self.nodes[a].value.rows,
            cols: self.nodes[a].value.cols,
            data: self.nodes[a]
                .value
                .data
                .iter()
                .zip(&self.nodes[b].value.data)
                .map(|(x, y)| x * y)
                .collect(),
        };
        Ok(self.push(Op::Mul(a, b), value))
    }

    /// a[m,n] * col[m,1] broadcast over columns.
    pub fn mul_colvec(&mut self, a: NodeId, col: NodeId) -> Result<NodeId, AutodiffError> {
        let (ar, _) = self.shape(a);
        let (cr, cc) = self.shape(col);
        if cc != 1 || cr != ar {
            return Err(AutodiffError::ShapeMismatch {
                op: "mul_colvec",
                lhs: self.shape(a),
                rhs: (cr, cc),
            });
        }
        let mut value = self.nodes[a].value.clone();
        for r in 0..value.rows {
            let w = self.nodes[col].value.at(r, 0);
            for v in value.row_mut(r) {
                *v *= w;
            }
        }
        Ok(self.push(Op::MulColVec(a, col), value))
    }

    /// Per-row dot product of two same-shape matrices -> [rows, 1].
    pub fn rowdot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(AutodiffError::ShapeMismatch {
                op: "rowdot",
                lhs: self.shape(a),
                rhs: self.shape(b),
            });
        }
        let (rows, _) = self.shape(a);
        let mut value = Mat::zeros(rows, 1);
        for r in 0..rows {
            value.data[r] = self.nodes[a]
                .value
                .row(r)
                .iter()
                .zip(self.nodes[b].value.row(r))
                .map(|(x, y)| x * y)
                .sum();
        }
        Ok(self.push(Op::RowDot(a, b), value))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.nodes[a].value.map(|x| x * c);
        self.push(Op::Scale(a, c), value)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, AutodiffError> {
        let rows = self.shape(parts[0]).0;
        let mut widths = Vec::with_capacity(parts.len());
        let mut total = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: (rows, 0),
                    rhs: (r, c),
                });
            }
            widths.push(c);
            total += c;
        }
        let mut value = Mat::zeros(rows, total);
        for r in 0..rows {
            let mut off = 0;
            for (&p, &w) in parts.iter().zip(&widths) {
                value.row_mut(r)[off..off + w].copy_from_slice(self.nodes[p].value.row(r));
                off += w;
            }
        }
        let meta = parts.iter().copied().zip(widths).collect();
        Ok(self.push(Op::ConcatCols(meta), value))
    }

    pub fn slice_cols(
        &mut self,
        a: NodeId,
        start: usize,
        len: usize,
    ) -> Result<NodeId, AutodiffError> {
        let (rows, cols) = self.shape(a);
        if start + len > cols {
            return Err(AutodiffError::SliceOutOfRange { start, len, cols });
        }
        let mut value = Mat::zeros(rows, len);
        for r in 0..rows {
            value
                .row_mut(r)
                .copy_from_slice(&self.nodes[a].value.row(r)[start..start + len]);
        }
        Ok(self.push(Op::SliceCols(a, start, len), value))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.map(sigmoid);
        self.push(Op::Sigmoid(a), value)
    }

    pub fn silu(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.map(|x| x * sigmoid(x));
        self.push(Op::Silu(a), value)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.map(f64::exp);
        self.push(Op::Exp(a), value)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.map(f64::ln);
        self.push(Op::Log(a), value)
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> NodeId {
        let value = self.nodes[a]
            .value
            .map(|x| if x > 0.0 { x } else { slope * x });
        self.push(Op::LeakyRelu(a, slope), value)
    }

    /// Dropout with probability `p`. Identity when p == 0 or when the tape
    /// is in evaluation mode. The mask is counter-based on
    /// (seed, layer_id, step, element) and carries the 1/(1-p) scale.
    pub fn dropout(&mut self, a: NodeId, p: f64, layer_id: u64) -> NodeId {
        if !self.training || p <= 0.0 {
            let value = self.nodes[a].value.clone();
            let n = value.data.len();
            return self.push(Op::Dropout(a, vec![1.0; n]), value);
        }
        let keep = 1.0 - p;
        let mask: Vec<f64> = (0..self.nodes[a].value.data.len())
            .map(|i| {
                if rng::uniform(&[self.seed, layer_id, self.step, i as u64]) < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let value = Mat {
            rows: self.nodes[a].value.rows,
            cols: self.nodes[a].value.cols,
            data: self.nodes[a]
                .value
                .data
                .iter()
                .zip(&mask)
                .map(|(x, m)| x * m)
                .collect(),
        };
        self.push(Op::Dropout(a, mask), value)
    }

    fn check_segments(
        &self,
        rows: usize,
        segments: &[usize],
        num_segments: usize,
    ) -> Result<(), AutodiffError> {
        if segments.len() != rows {
            return Err(AutodiffError::ShapeMismatch {
                op: "segments",
                lhs: (rows, 0),
                rhs: (segments.len(), 0),
            });
        }
        let mut counts = vec![0usize; num_segments];
        for &s in segments {
            if s >= num_segments {
                return Err(AutodiffError::SegmentOutOfRange {
                    id: s,
                    num: num_segments,
                });
            }
            counts[s] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(AutodiffError::EmptySegment(empty));
        }
        Ok(())
    }

    /// Column-wise softmax within row segments (stabilized by per-segment
    /// max subtraction).
    pub fn softmax_segments(
        &mut self,
        a: NodeId,
        segments: Arc<Vec<usize>>,
        num_segments: usize,
    ) -> Result<NodeId, AutodiffError> {
        let (rows, cols) = self.shape(a);
        self.check_segments(rows, &segments, num_segments)?;
        let x = &self.nodes[a].value;
        let mut maxes = vec![f64::NEG_INFINITY; num_segments * cols];
        for r in 0..rows {
            for c in 0..cols {
                let slot = segments[r] * cols + c;
                maxes[slot] = maxes[slot].max(x.at(r, c));
            }
        }
        let mut sums = vec![0.0; num_segments * cols];
        let mut value = Mat::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                let slot = segments[r] * cols + c;
                let e = (x.at(r, c) - maxes[slot]).exp();
                *value.at_mut(r, c) = e;
                sums[slot] += e;
            }
        }
        for r in 0..rows {
            for c in 0..cols {
                let slot = segments[r] * cols + c;
                *value.at_mut(r, c) /= sums[slot];
            }
        }
        Ok(self.push(Op::SoftmaxSegments(a, segments), value))
    }

    pub fn segment_sum(
        &mut self,
        a: NodeId,
        segments: Arc<Vec<usize>>,
        num_segments: usize,
    ) -> Result<NodeId, AutodiffError> {
        let (rows, cols) = self.shape(a);
        self.check_segments(rows, &segments, num_segments)?;
        let mut value = Mat::zeros(num_segments, cols);
        for r in 0..rows {
            let seg = segments[r];
            let src = self.nodes[a].value.row(r).to_vec();
            for (v, s) in value.row_mut(seg).iter_mut().zip(&src) {
                *v += s;
            }
        }
        Ok(self.push(Op::SegmentSum(a, segments), value))
    }

    pub fn segment_mean(
        &mut self,
        a: NodeId,
        segments: Arc<Vec<usize>>,
        num_segments: usize,
    ) -> Result<NodeId, AutodiffError> {
        let (rows, cols) = self.shape(a);
        self.check_segments(rows, &segments, num_segments)?;
        let mut counts = vec![0.0; num_segments];
        for &s in segments.iter() {
            counts[s] += 1.0;
        }
        let mut value = Mat::zeros(num_segments, cols);
        for r in 0..rows {
            let seg = segments[r];
            let src = self.nodes[a].value.row(r).to_vec();
            for (v, s) in value.row_mut(seg).iter_mut().zip(&src) {
                *v += s / counts[seg];
            }
        }
        Ok(self.push(Op::SegmentMean(a, segments, num_segments), value))
    }

    pub fn segment_max(
        &mut self,
        a: NodeId,
        segments: Arc<Vec<usize>>,
        num_segments: usize,
    ) -> Result<NodeId, AutodiffError> {
        let (rows, cols) = self.shape(a);
        self.check_segments(rows, &segments, num_segments)?;
        let mut value = Mat::zeros(num_segments, cols);
        let mut argmax = vec![usize::MAX; num_segments * cols];
        for slot in value.data.iter_mut() {
            *slot = f64::NEG_INFINITY;
        }
        for r in 0..rows {
            let seg = segments[r];
            for c in 0..cols {
                let x = self.nodes[a].value.at(r, c);
                if x > value.at(seg, c) {
                    *value.at_mut(seg, c) = x;
                    argmax[seg * cols + c] = r;
                }
            }
        }
        Ok(self.push(Op::SegmentMax(a, argmax), value))
    }

    pub fn gather_rows(
        &mut self,
        a: NodeId,
        indices: Arc<Vec<usize>>,
    ) -> Result<NodeId, AutodiffError> {
        let (rows, cols) = self.shape(a);
        let mut value = Mat::zeros(indices.len(), cols);
        for (out_r, &idx) in indices.iter().enumerate() {
            if idx >= rows {
                return Err(AutodiffError::GatherOutOfRange { idx, rows });
            }
            let src = self.nodes[a].value.row(idx).to_vec();
            value.row_mut(out_r).copy_from_slice(&src);
        }
        Ok(self.push(Op::GatherRows(a, indices), value))
    }

    /// Row-major reinterpretation; element count must be preserved.
    pub fn reshape(
        &mut self,
        a: NodeId,
        rows: usize,
        cols: usize,
    ) -> Result<NodeId, AutodiffError> {
        let (ar, ac) = self.shape(a);
        if ar * ac != rows * cols {
            return Err(AutodiffError::ShapeMismatch {
                op: "reshape",
                lhs: (ar, ac),
                rhs: (rows, cols),
            });
        }
        let value = Mat::from_vec(rows, cols, self.nodes[a].value.data.clone());
        Ok(self.push(Op::Reshape(a), value))
    }

    /// Mean squared error against a constant target -> scalar node.
    pub fn mse_loss(&mut self, pred: NodeId, target: &Mat) -> Result<NodeId, AutodiffError> {
        if self.shape(pred) != target.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "mse_loss",
                lhs: self.shape(pred),
                rhs: target.shape(),
            });
        }
        let n = target.data.len() as f64;
        let loss = self.nodes[pred]
            .value
            .data
            .iter()
            .zip(&target.data)
            .map(|(p, t)| (p - t).powi(2))
            .sum::<f64>()
            / n;
        Ok(self.push(Op::MseLoss(pred, target.clone()), Mat::scalar(loss)))
    }

    /// Reverse sweep from a scalar loss. Gradients accumulate (+=) into the
    /// parameter store; the tape is cleared afterwards.
    pub fn backward(&mut self, loss: NodeId, store: &mut ParamStore) -> Result<(), AutodiffError> {
        if !self.nodes[loss].value.is_scalar() {
            return Err(AutodiffError::NonScalarLoss {
                shape: self.nodes[loss].value.shape(),
            });
        }
        let mut grads: Vec<Mat> = self
            .nodes
            .iter()
            .map(|n| Mat::zeros(n.value.rows, n.value.cols))
            .collect();
        grads[loss].data[0] = 1.0;

        for id in (0..=loss).rev() {
            let g = std::mem::replace(&mut grads[id], Mat::zeros(0, 0));
            if g.data.iter().all(|&x| x == 0.0) {
                grads[id] = g;
                continue;
            }
            match &self.nodes[id].op {
                Op::Leaf | Op::Param(_) => {
                    grads[id] = g;
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let da = g.matmul_t(&self.nodes[b].value);
                    let db = self.nodes[a].value.t_matmul(&g);
                    grads[a].add_assign(&da);
                    grads[b].add_assign(&db);
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    grads[a].add_assign(&g);
                    grads[b].add_assign(&g);
                }
                Op::AddBias(a, bias) => {
                    let (a, bias) = (*a, *bias);
                    grads[a].add_assign(&g);
                    for r in 0..g.rows {
                        for c in 0..g.cols {
                            grads[bias].data[c] += g.at(r, c);
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    for i in 0..g.data.len() {
                        grads[a].data[i] += g.data[i] * self.nodes[b].value.data[i];
                    }
                    for i in 0..g.data.len() {
                        grads[b].data[i] += g.data[i] * self.nodes[a].value.data[i];
                    }
                }
                Op::MulColVec(a, col) => {
                    let (a, col) = (*a, *col);
                    for r in 0..g.rows {
                        let w = self.nodes[col].value.at(r, 0);
                        for c in 0..g.cols {
                            grads[a].data[r * g.cols + c] += g.at(r, c) * w;
                            grads[col].data[r] += g.at(r, c) * self.nodes[a].value.at(r, c);
                        }
                    }
                }
                Op::RowDot(a, b) => {
                    let (a, b) = (*a, *b);
                    let cols = self.nodes[a].value.cols;
                    for r in 0..g.rows {
                        let gr = g.data[r];
                        for c in 0..cols {
                            grads[a].data[r * cols + c] += gr * self.nodes[b].value.at(r, c);
                            grads[b].data[r * cols + c] += gr * self.nodes[a].value.at(r, c);
                        }
                    }
                }
                Op::Scale(a, s) => {
                    let (a, s) = (*a, *s);
                    for i in 0..g.data.len() {
                        grads[a].data[i] += g.data[i] * s;
                    }
                }
                Op::ConcatCols(parts) => {
                    let parts = parts.clone();
                    for r in 0..g.rows {
                        let mut off = 0;
                        for &(p, w) in &parts {
                            for c in 0..w {
                                grads[p].data[r * w + c] += g.at(r, off + c);
                            }
                            off += w;
                        }
                    }
                }
                Op::SliceCols(a, start, len) => {
                    let (a, start, len) = (*a, *start, *len);
                    let cols = self.nodes[a].value.cols;
                    for r in 0..g.rows {
                        for c in 0..len {
                            grads[a].data[r * cols + start + c] += g.at(r, c);
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    let a = *a;
                    for i in 0..g.data.len() {
                        let y = self.nodes[id].value.data[i];
                        grads[a].data[i] += g.data[i] * y * (1.0 - y);
                    }
                }
                Op::Silu(a) => {
                    let a = *a;
                    for i in 0..g.data.len() {
                        let x = self.nodes[a].value.data[i];
                        let s = sigmoid(x);
                        grads[a].data[i] += g.data[i] * (s + x * s * (1.0 - s));
                    }
                }
                Op::Exp(a) => {
                    let a = *a;
                    for i in 0..g.data.len() {
                        grads[a].data[i] += g.data[i] * self.nodes[id].value.data[i];
                    }
                }
                Op::Log(a) => {
                    let a = *a;
                    for i in 0..g.data.len() {
                        grads[a].data[i] += g.data[i] / self.nodes[a].value.data[i];
                    }
                }
                Op::LeakyRelu(a, slope) => {
                    let (a, slope) = (*a, *slope);
                    for i in 0..g.data.len() {
                        let d = if self.nodes[a].value.data[i] > 0.0 {
                            1.0
                        } else {
                            slope
                        };
                        grads[a].data[i] += g.data[i] * d;
                    }
                }
                Op::Dropout(a, mask) => {
                    let a = *a;
                    let mask = mask.clone();
                    for ((ga, &gi), &mi) in grads[a].data.iter_mut().zip(&g.data).zip(&mask) {
                        *ga += gi * mi;
                    }
                }
                Op::SoftmaxSegments(a, segments) => {
                    let a = *a;
                    let segments = segments.clone();
                    let y = &self.nodes[id].value;
                    let cols = y.cols;
                    let num_segments = segments.iter().max().map(|&m| m + 1).unwrap_or(0);
                    // per (segment, column): sum of y * g
                    let mut dots = vec![0.0; num_segments * cols];
                    for r in 0..y.rows {
                        for c in 0..cols {
                            dots[segments[r] * cols + c] += y.at(r, c) * g.at(r, c);
                        }
                    }
                    for r in 0..y.rows {
                        for c in 0..cols {
                            let slot = segments[r] * cols + c;
                            grads[a].data[r * cols + c] += y.at(r, c) * (g.at(r, c) - dots[slot]);
                        }
                    }
                }
                Op::SegmentSum(a, segments) => {
                    let a = *a;
                    let segments = segments.clone();
                    let cols = g.cols;
                    for r in 0..segments.len() {
                        let seg = segments[r];
                        for c in 0..cols {
                            grads[a].data[r * cols + c] += g.at(seg, c);
                        }
                    }
                }
                Op::SegmentMean(a, segments, num) => {
                    let a = *a;
                    let segments = segments.clone();
                    let mut counts = vec![0.0; *num];
                    for &s in segments.iter() {
                        counts[s] += 1.0;
                    }
                    let cols = g.cols;
                    for r in 0..segments.len() {
                        let seg = segments[r];
                        for c in 0..cols {
                            grads[a].data[r * cols + c] += g.at(seg, c) / counts[seg];
                        }
                    }
                }
                Op::SegmentMax(a, argmax) => {
                    let a = *a;
                    let argmax = argmax.clone();
                    let cols = g.cols;
                    for seg in 0..g.rows {
                        for c in 0..cols {
                            let r = argmax[seg * cols + c];
                            grads[a].data[r * cols + c] += g.at(seg, c);
                        }
                    }
                }
                Op::GatherRows(a, indices) => {
                    let a = *a;
                    let indices = indices.clone();
                    let cols = g.cols;
                    for (out_r, &idx) in indices.iter().enumerate() {
                        for c in 0..cols {
                            grads[a].data[idx * cols + c] += g.at(out_r, c);
                        }
                    }
                }
                Op::Reshape(a) => {
                    let a = *a;
                    for i in 0..g.data.len() {
                        grads[a].data[i] += g.data[i];
                    }
                }
                Op::MseLoss(pred, target) => {
                    let pred = *pred;
                    let target = target.clone();
                    let n = target.data.len() as f64;
                    let gl = g.data[0];
                    for i in 0..target.data.len() {
                        grads[pred].data[i] +=
                            gl * 2.0 * (self.nodes[pred].value.data[i] - target.data[i]) / n;
                    }
                }
            }
            grads[id] = g;
        }

        // flush leaf gradients into the parameter store
        for (id, node) in self.nodes.iter().enumerate() {
            if let Op::Param(pid) = node.op {
                store.accumulate_grad(pid, &grads[id]);
            }
        }
        self.nodes.clear();
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] owns every value produced during one forward pass. Operations
//! append nodes in execution order, so node inputs always precede the node
//! itself and [`Tape::backward`] can sweep the arena once in reverse.
//! An inference tape ([`Tape::inference`]) runs the same kernels but records
//! no gradient rules.

use crate::tensor::{
    gemm_at_acc, gemm_bt_acc, matmul_dims, neg_log_sigmoid, sigmoid, softmax_slices,
    Activation, Result, Tensor, TensorError,
};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Act(Var, Activation),
    Softmax(Var),
    Slice(Var, usize),
    Sum(Var),
    MeanRows(Var),
    Gather(Var, Vec<usize>),
    Stack(Vec<Var>),
    AddN(Vec<Var>),
    SoftmaxCe {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    SigmoidBce {
        logits: Var,
        targets: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    recording: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when the loss does not depend on `var`.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn slot<'g>(grads: &'g mut [Option<Tensor>], var: Var, shape: &[usize]) -> &'g mut [f64] {
    grads[var.0]
        .get_or_insert_with(|| Tensor::zeros(shape))
        .data_mut()
}

impl Tape {
    /// A tape that records gradient rules.
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            recording: true,
        }
    }

    /// A tape that only evaluates; [`Tape::backward`] is rejected.
    pub fn inference() -> Self {
        Tape {
            nodes: Vec::new(),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let op = if self.recording { op } else { Op::Leaf };
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Register an input (parameter or constant).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn scalar_value(&self, var: Var) -> Result<f64> {
        self.value(var).item()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = crate::tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = crate::tensor::transpose(self.value(a))?;
        Ok(self.push(value, Op::Transpose(a)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if !x.same_shape(y) {
            return Err(shape_err("add", x, y));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let value = Tensor::new(x.shape(), data)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Adds a vector to every row of a matrix (or to a same-length vector).
    pub fn add_row(&mut self, m: Var, v: Var) -> Result<Var> {
        let (x, y) = (self.value(m), self.value(v));
        if y.rank() != 1 || x.last_dim() != y.len() {
            return Err(shape_err("add_row", x, y));
        }
        let w = y.len();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, p)| p + y.data()[i % w])
            .collect();
        let value = Tensor::new(x.shape(), data)?;
        Ok(self.push(value, Op::AddRow(m, v)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if !x.same_shape(y) {
            return Err(shape_err("mul", x, y));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let value = Tensor::new(x.shape(), data)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let x = self.value(a);
        let value = Tensor::new(x.shape(), x.data().iter().map(|v| v * factor).collect())
            .expect("scale preserves shape");
        self.push(value, Op::Scale(a, factor))
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Result<Var> {
        let value = crate::tensor::map_activation(self.value(a), kind)?;
        Ok(self.push(value, Op::Act(a, kind)))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Tanh).expect("tanh is total")
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Sigmoid)
            .expect("sigmoid is total")
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Relu).expect("relu is total")
    }

    /// Softmax over the last dimension.
    pub fn softmax(&mut self, a: Var) -> Var {
        let value = crate::tensor::softmax_lastdim(self.value(a)).expect("softmax is total");
        self.push(value, Op::Softmax(a))
    }

    /// Contiguous slice `[start, start + len)` of a vector.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if x.rank() != 1 || len == 0 || start + len > x.len() {
            return Err(TensorError::Contract(format!(
                "slice [{start}, {}) of shape {:?}",
                start + len,
                x.shape()
            )));
        }
        let value = Tensor::vector(x.data()[start..start + len].to_vec());
        Ok(self.push(value, Op::Slice(a, start)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(a))
    }

    /// Column means of a matrix: `[r×c] -> [c]`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (r, c) = x.dims2()?;
        let mut out = vec![0.0; c];
        for row in x.data().chunks(c) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= r as f64;
        }
        Ok(self.push(Tensor::vector(out), Op::MeanRows(a)))
    }

    /// Row gather `[V×E] -> [T×E]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (v, e) = t.dims2()?;
        if ids.is_empty() {
            return Err(TensorError::Contract("gather of zero rows".into()));
        }
        let mut out = Vec::with_capacity(ids.len() * e);
        for &id in ids {
            if id >= v {
                return Err(TensorError::Index { index: id, len: v });
            }
            out.extend_from_slice(&t.data()[id * e..(id + 1) * e]);
        }
        let value = Tensor::new(&[ids.len(), e], out)?;
        Ok(self.push(value, Op::Gather(table, ids.to_vec())))
    }

    /// Single row of a matrix as a vector.
    pub fn row(&mut self, table: Var, id: usize) -> Result<Var> {
        let m = self.gather_rows(table, &[id])?;
        let e = self.value(m).last_dim();
        // Reshape in place: a 1×E gather is stored identically to an E vector.
        let node = &mut self.nodes[m.0];
        node.value = node.value.clone().reshape(&[e])?;
        Ok(m)
    }

    /// Stack equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let first = rows
            .first()
            .ok_or_else(|| TensorError::Contract("stack of zero rows".into()))?;
        let w = self.value(*first).len();
        let mut out = Vec::with_capacity(rows.len() * w);
        for &r in rows {
            let x = self.value(r);
            if x.rank() != 1 || x.len() != w {
                return Err(shape_err("stack", self.value(*first), x));
            }
            out.extend_from_slice(x.data());
        }
        let value = Tensor::new(&[rows.len(), w], out)?;
        Ok(self.push(value, Op::Stack(rows.to_vec())))
    }

    /// Elementwise sum of same-shape tensors.
    pub fn add_n(&mut self, terms: &[Var]) -> Result<Var> {
        let first = terms
            .first()
            .ok_or_else(|| TensorError::Contract("add_n of zero terms".into()))?;
        let mut acc = self.value(*first).clone();
        for &t in &terms[1..] {
            let x = self.value(t);
            if !x.same_shape(&acc) {
                return Err(shape_err("add_n", &acc, x));
            }
            for (a, v) in acc.data_mut().iter_mut().zip(x.data()) {
                *a += v;
            }
        }
        Ok(self.push(acc, Op::AddN(terms.to_vec())))
    }

    /// Summed softmax cross-entropy of each row of `logits` against the
    /// class index in `targets`. A vector is treated as a single row.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let x = self.value(logits);
        let width = x.last_dim();
        let rows = x.len() / width;
        if rows != targets.len() {
            return Err(TensorError::Contract(format!(
                "cross-entropy over {rows} rows with {} targets",
                targets.len()
            )));
        }
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            if t >= width {
                return Err(TensorError::Index {
                    index: t,
                    len: width,
                });
            }
            let row = &x.data()[r * width..(r + 1) * width];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[t];
        }
        let probs = if self.recording {
            softmax_slices(x.data(), width)
        } else {
            Vec::new()
        };
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCe {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Summed sigmoid cross-entropy of logits against targets in `[0, 1]`,
    /// evaluated in log space.
    pub fn sigmoid_cross_entropy(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let x = self.value(logits);
        if x.len() != targets.len() {
            return Err(TensorError::Contract(format!(
                "sigmoid cross-entropy over {} logits with {} targets",
                x.len(),
                targets.len()
            )));
        }
        let loss = x
            .data()
            .iter()
            .zip(targets)
            .map(|(&l, &z)| z * neg_log_sigmoid(l) + (1.0 - z) * neg_log_sigmoid(-l))
            .sum();
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SigmoidBce {
                logits,
                targets: targets.to_vec(),
            },
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.recording {
            return Err(TensorError::Contract(
                "backward on an inference tape".into(),
            ));
        }
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(TensorError::Contract(format!(
                "loss must be scalar, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::new(lv.shape(), vec![1.0])?);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let g = g.data();
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n, _) = matmul_dims(av, bv)?;
                    gemm_bt_acc(g, bv.data(), slot(&mut grads, *a, av.shape()), m, k, n);
                    gemm_at_acc(av.data(), g, slot(&mut grads, *b, bv.shape()), m, k, n);
                }
                Op::Transpose(a) => {
                    let (r, c) = self.value(*a).dims2()?;
                    let out = slot(&mut grads, *a, &[r, c]);
                    for p in 0..r {
                        for q in 0..c {
                            out[p * c + q] += g[q * r + p];
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [a, b] {
                        let out = slot(&mut grads, *v, node.value.shape());
                        for (o, gv) in out.iter_mut().zip(g) {
                            *o += gv;
                        }
                    }
                }
                Op::AddRow(m, v) => {
                    let out = slot(&mut grads, *m, node.value.shape());
                    for (o, gv) in out.iter_mut().zip(g) {
                        *o += gv;
                    }
                    let vs = self.value(*v).shape();
                    let w = vs[0];
                    let out = slot(&mut grads, *v, vs);
                    for (j, gv) in g.iter().enumerate() {
                        out[j % w] += gv;
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let out = slot(&mut grads, *a, av.shape());
                    for ((o, gv), y) in out.iter_mut().zip(g).zip(bv.data()) {
                        *o += gv * y;
                    }
                    let out = slot(&mut grads, *b, bv.shape());
                    for ((o, gv), x) in out.iter_mut().zip(g).zip(av.data()) {
                        *o += gv * x;
                    }
                }
                Op::Scale(a, factor) => {
                    let out = slot(&mut grads, *a, node.value.shape());
                    for (o, gv) in out.iter_mut().zip(g) {
                        *o += gv * factor;
                    }
                }
                Op::Act(a, kind) => {
                    let x = self.value(*a).data();
                    let y = node.value.data();
                    let out = slot(&mut grads, *a, node.value.shape());
                    for j in 0..out.len() {
                        out[j] += g[j] * kind.derivative(x[j], y[j]);
                    }
                }
                Op::Softmax(a) => {
                    let y = node.value.data();
                    let w = node.value.last_dim();
                    let out = slot(&mut grads, *a, node.value.shape());
                    for start in (0..y.len()).step_by(w) {
                        let ys = &y[start..start + w];
                        let gs = &g[start..start + w];
                        let dot: f64 = ys.iter().zip(gs).map(|(p, q)| p * q).sum();
                        for j in 0..w {
                            out[start + j] += ys[j] * (gs[j] - dot);
                        }
                    }
                }
                Op::Slice(a, start) => {
                    let out = slot(&mut grads, *a, self.value(*a).shape());
                    for (j, gv) in g.iter().enumerate() {
                        out[start + j] += gv;
                    }
                }
                Op::Sum(a) => {
                    let out = slot(&mut grads, *a, self.value(*a).shape());
                    for o in out.iter_mut() {
                        *o += g[0];
                    }
                }
                Op::MeanRows(a) => {
                    let (r, c) = self.value(*a).dims2()?;
                    let out = slot(&mut grads, *a, &[r, c]);
                    let inv = 1.0 / r as f64;
                    for row in out.chunks_mut(c) {
                        for (o, gv) in row.iter_mut().zip(g) {
                            *o += gv * inv;
                        }
                    }
                }
                Op::Gather(table, ids) => {
                    let (_, e) = self.value(*table).dims2()?;
                    let out = slot(&mut grads, *table, self.value(*table).shape());
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..e {
                            out[id * e + j] += g[r * e + j];
                        }
                    }
                }
                Op::Stack(rows) => {
                    let w = node.value.last_dim();
                    for (r, v) in rows.iter().enumerate() {
                        let out = slot(&mut grads, *v, &[w]);
                        for j in 0..w {
                            out[j] += g[r * w + j];
                        }
                    }
                }
                Op::AddN(terms) => {
                    for v in terms {
                        let out = slot(&mut grads, *v, node.value.shape());
                        for (o, gv) in out.iter_mut().zip(g) {
                            *o += gv;
                        }
                    }
                }
                Op::SoftmaxCe {
                    logits,
                    targets,
                    probs,
                } => {
                    let shape = self.value(*logits).shape();
                    let w = *shape.last().unwrap();
                    let out = slot(&mut grads, *logits, shape);
                    for (j, o) in out.iter_mut().enumerate() {
                        *o += g[0] * probs[j];
                    }
                    for (r, &t) in targets.iter().enumerate() {
                        out[r * w + t] -= g[0];
                    }
                }
                Op::SigmoidBce { logits, targets } => {
                    let x = self.value(*logits);
                    let out = slot(&mut grads, *logits, x.shape());
                    for ((o, &l), &z) in out.iter_mut().zip(x.data()).zip(targets) {
                        *o += g[0] * (sigmoid(l) - z);
                    }
                }
            }
            // Keep leaf gradients for the caller.
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(Tensor::new(node.value.shape(), g.to_vec())?);
            }
        }
        Ok(Gradients { grads })
    }
}

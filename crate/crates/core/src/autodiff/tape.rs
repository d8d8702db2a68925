//! Reverse-mode differentiation over a flat operation tape.
//!
//! Every trainable objective in the crate (semantic margin+mask loss,
//! graph-convolution cross-entropy, BPR, InfoNCE) is expressed as a small
//! graph of these ops, so one backward pass serves them all and finite
//! differences can check any of them end to end.

use std::rc::Rc;

use super::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Sparse neighbor index for the graph-convolution aggregate op:
/// `index[h]` lists `(tail_row, relation_row)` pairs.
pub type NeighborIndex = Vec<Vec<(u32, u32)>>;

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    /// Elementwise product of same-shape tensors.
    Mul(Var, Var),
    ScaleConst(Var, f64),
    /// Broadcast scalar × tensor.
    SMul(Var, Var),
    /// Tensor ÷ broadcast scalar.
    SDiv(Var, Var),
    Dot(Var, Var),
    Relu(Var),
    /// Σ|x|; subgradient 0 at kinks.
    L1Norm(Var),
    L2Norm(Var),
    /// Softmax along each row.
    RowSoftmax(Var),
    /// Non-affine layer normalization along each row.
    LayerNormRows(Var, f64),
    /// log Σ exp over a vector, numerically stable.
    LogSumExp(Var),
    /// Mean over rows of (logsumexp(row) − row[target]).
    MeanCrossEntropyRows(Var, Rc<Vec<usize>>),
    /// Binary cross-entropy of sigmoid(logit) against a fixed label.
    SigmoidBce(Var, f64),
    /// softplus(−x) = −ln σ(x), the per-pair BPR term.
    SoftplusNeg(Var),
    MatMulNN(Var, Var),
    MatMulNT(Var, Var),
    /// W (m×n) · x (n) → m.
    MatVec(Var, Var),
    /// wᵀ (m) · M (m×n) → n.
    VecMat(Var, Var),
    /// M (m×n) + row vector b (n) broadcast over rows.
    AddRowBroadcast(Var, Var),
    /// Gather rows of a table.
    Rows(Var, Rc<Vec<usize>>),
    /// Mean of the row range [start, end).
    MeanRows(Var, usize, usize),
    ConcatVecs(Vec<Var>),
    StackScalars(Vec<Var>),
    SumNodes(Vec<Var>),
    /// out[h] = Σ_{(t,r) ∈ N(h)} (E[t] − R[r]).
    GcnNeighborSum {
        entities: Var,
        relations: Var,
        index: Rc<NeighborIndex>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    by_node: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`; zeros if `v` did not influence it.
    pub fn of(&self, v: Var, shape_like: &Tensor) -> Tensor {
        match &self.by_node[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(shape_like.rows(), shape_like.cols()),
        }
    }

    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.by_node[v.0].as_ref()
    }
}

/// Operation tape. Build a loss with the op methods, then call
/// [`Tape::backward`] on the final scalar.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn softmax_into(row: &[f64], out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(row.iter()) {
        let e = (x - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Insert a constant or parameter snapshot.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.leaf(Tensor::scalar(v))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        assert!(out.same_shape(self.value(b)), "add shape mismatch");
        out.axpy(1.0, self.value(b));
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        assert!(out.same_shape(self.value(b)), "sub shape mismatch");
        out.axpy(-1.0, self.value(b));
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let av = self.value(a);
        let bv = self.value(b);
        assert!(av.same_shape(bv), "mul shape mismatch");
        let data = av
            .data()
            .iter()
            .zip(bv.data().iter())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::from_rows(av.rows(), av.cols(), data);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let mut out = self.value(a).clone();
        for v in out.data_mut() {
            *v *= c;
        }
        self.push(out, Op::ScaleConst(a, c))
    }

    /// Broadcast multiply: scalar node × tensor node.
    pub fn smul(&mut self, s: Var, t: Var) -> Var {
        let sv = self.value(s).item();
        let mut out = self.value(t).clone();
        for v in out.data_mut() {
            *v *= sv;
        }
        self.push(out, Op::SMul(s, t))
    }

    /// Broadcast divide: tensor node ÷ scalar node.
    pub fn sdiv(&mut self, t: Var, s: Var) -> Var {
        let sv = self.value(s).item();
        let mut out = self.value(t).clone();
        for v in out.data_mut() {
            *v /= sv;
        }
        self.push(out, Op::SDiv(t, s))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let av = self.value(a);
        let bv = self.value(b);
        assert_eq!(av.len(), bv.len(), "dot length mismatch");
        let v = av
            .data()
            .iter()
            .zip(bv.data().iter())
            .map(|(x, y)| x * y)
            .sum();
        self.push(Tensor::scalar(v), Op::Dot(a, b))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for v in out.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        self.push(out, Op::Relu(a))
    }

    pub fn l1_norm(&mut self, a: Var) -> Var {
        let v = self.value(a).data().iter().map(|x| x.abs()).sum();
        self.push(Tensor::scalar(v), Op::L1Norm(a))
    }

    pub fn l2_norm(&mut self, a: Var) -> Var {
        let v = self.value(a).l2_norm();
        self.push(Tensor::scalar(v), Op::L2Norm(a))
    }

    /// Softmax along each row (1-row tensors give the plain vector softmax).
    pub fn row_softmax(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut out = Tensor::zeros(av.rows(), av.cols());
        for r in 0..av.rows() {
            softmax_into(av.row(r), out.row_mut(r));
        }
        self.push(out, Op::RowSoftmax(a))
    }

    /// Per-row (x − μ)/√(σ² + eps), no learnable affine.
    pub fn layer_norm_rows(&mut self, a: Var, eps: f64) -> Var {
        let av = self.value(a);
        let n = av.cols() as f64;
        let mut out = Tensor::zeros(av.rows(), av.cols());
        for r in 0..av.rows() {
            let row = av.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + eps).sqrt();
            for (o, &x) in out.row_mut(r).iter_mut().zip(row.iter()) {
                *o = (x - mean) * inv;
            }
        }
        self.push(out, Op::LayerNormRows(a, eps))
    }

    pub fn logsumexp(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let max = av.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let v = max + av.data().iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        self.push(Tensor::scalar(v), Op::LogSumExp(a))
    }

    /// Mean cross-entropy of row-wise logits against integer targets.
    pub fn mean_cross_entropy_rows(&mut self, logits: Var, targets: Vec<usize>) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.rows(), targets.len(), "one target per logits row");
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = lv.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            total += lse - row[t];
        }
        let v = total / targets.len() as f64;
        self.push(
            Tensor::scalar(v),
            Op::MeanCrossEntropyRows(logits, Rc::new(targets)),
        )
    }

    /// −[y ln σ(z) + (1−y) ln(1−σ(z))] from the raw logit z.
    pub fn sigmoid_bce(&mut self, logit: Var, label: f64) -> Var {
        let z = self.value(logit).item();
        let v = softplus(z) - label * z;
        self.push(Tensor::scalar(v), Op::SigmoidBce(logit, label))
    }

    /// −ln σ(x) as a stable scalar op.
    pub fn softplus_neg(&mut self, a: Var) -> Var {
        let x = self.value(a).item();
        self.push(Tensor::scalar(softplus(-x)), Op::SoftplusNeg(a))
    }

    pub fn matmul_nn(&mut self, a: Var, b: Var) -> Var {
        let out = Tensor::matmul_nn(self.value(a), self.value(b));
        self.push(out, Op::MatMulNN(a, b))
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let out = Tensor::matmul_nt(self.value(a), self.value(b));
        self.push(out, Op::MatMulNT(a, b))
    }

    /// W (m×n) applied to a length-n vector.
    pub fn matvec(&mut self, w: Var, x: Var) -> Var {
        let wv = self.value(w);
        let xv = self.value(x);
        assert_eq!(wv.cols(), xv.len(), "matvec dim mismatch");
        let mut out = vec![0.0; wv.rows()];
        for (i, o) in out.iter_mut().enumerate() {
            let row = wv.row(i);
            *o = row.iter().zip(xv.data().iter()).map(|(a, b)| a * b).sum();
        }
        self.push(Tensor::from_vec(out), Op::MatVec(w, x))
    }

    /// Length-m vector times M (m×n): Σ_k w[k]·M[k,:].
    pub fn vecmat(&mut self, w: Var, m: Var) -> Var {
        let wv = self.value(w);
        let mv = self.value(m);
        assert_eq!(wv.len(), mv.rows(), "vecmat dim mismatch");
        let mut out = vec![0.0; mv.cols()];
        for (k, &wk) in wv.data().iter().enumerate() {
            if wk == 0.0 {
                continue;
            }
            for (o, &x) in out.iter_mut().zip(mv.row(k).iter()) {
                *o += wk * x;
            }
        }
        self.push(Tensor::from_vec(out), Op::VecMat(w, m))
    }

    pub fn add_row_broadcast(&mut self, m: Var, b: Var) -> Var {
        let mv = self.value(m);
        let bv = self.value(b);
        assert_eq!(mv.cols(), bv.len(), "broadcast dim mismatch");
        let mut out = mv.clone();
        for r in 0..out.rows() {
            for (o, &x) in out.row_mut(r).iter_mut().zip(bv.data().iter()) {
                *o += x;
            }
        }
        self.push(out, Op::AddRowBroadcast(m, b))
    }

    /// Gather table rows (embedding lookup).
    pub fn rows(&mut self, table: Var, indices: Vec<usize>) -> Var {
        let tv = self.value(table);
        let mut out = Tensor::zeros(indices.len(), tv.cols());
        for (r, &i) in indices.iter().enumerate() {
            out.row_mut(r).copy_from_slice(tv.row(i));
        }
        self.push(out, Op::Rows(table, Rc::new(indices)))
    }

    /// Single table row as a vector.
    pub fn row(&mut self, table: Var, index: usize) -> Var {
        self.rows(table, vec![index])
    }

    /// Mean of rows [start, end).
    pub fn mean_rows(&mut self, m: Var, start: usize, end: usize) -> Var {
        assert!(start < end, "empty row span");
        let mv = self.value(m);
        let mut out = vec![0.0; mv.cols()];
        for r in start..end {
            for (o, &x) in out.iter_mut().zip(mv.row(r).iter()) {
                *o += x;
            }
        }
        let inv = 1.0 / (end - start) as f64;
        for o in out.iter_mut() {
            *o *= inv;
        }
        self.push(Tensor::from_vec(out), Op::MeanRows(m, start, end))
    }

    pub fn concat_vecs(&mut self, parts: Vec<Var>) -> Var {
        let mut data = Vec::new();
        for &p in &parts {
            data.extend_from_slice(self.value(p).data());
        }
        self.push(Tensor::from_vec(data), Op::ConcatVecs(parts))
    }

    pub fn stack_scalars(&mut self, parts: Vec<Var>) -> Var {
        let data: Vec<f64> = parts.iter().map(|&p| self.value(p).item()).collect();
        self.push(Tensor::from_vec(data), Op::StackScalars(parts))
    }

    /// Elementwise sum of same-shape nodes.
    pub fn sum_nodes(&mut self, parts: Vec<Var>) -> Var {
        assert!(!parts.is_empty(), "sum of zero nodes");
        let mut out = self.value(parts[0]).clone();
        for &p in &parts[1..] {
            out.axpy(1.0, self.value(p));
        }
        self.push(out, Op::SumNodes(parts))
    }

    /// Composition aggregate over neighbors: out[h] = Σ (E[t] − R[r]).
    pub fn gcn_neighbor_sum(
        &mut self,
        entities: Var,
        relations: Var,
        index: Rc<NeighborIndex>,
    ) -> Var {
        let ev = self.value(entities);
        let rv = self.value(relations);
        assert_eq!(ev.cols(), rv.cols(), "entity/relation dim mismatch");
        let mut out = Tensor::zeros(index.len(), ev.cols());
        for (h, neighbors) in index.iter().enumerate() {
            let orow = out.row_mut(h);
            for &(t, r) in neighbors {
                let trow = ev.row(t as usize);
                let rrow = rv.row(r as usize);
                for ((o, &tv), &rv_) in orow.iter_mut().zip(trow.iter()).zip(rrow.iter()) {
                    *o += tv - rv_;
                }
            }
        }
        self.push(
            out,
            Op::GcnNeighborSum {
                entities,
                relations,
                index,
            },
        )
    }

    /// Reverse sweep from a scalar loss node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert!(
            self.value(loss).is_scalar(),
            "backward must start from a scalar"
        );
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { by_node: grads }
    }

    fn accumulate(grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        match &mut grads[v.0] {
            Some(g) => g.axpy(1.0, &delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn accumulate_scaled(&self, grads: &mut [Option<Tensor>], v: Var, scale: f64, delta: &Tensor) {
        match &mut grads[v.0] {
            Some(g) => g.axpy(scale, delta),
            slot @ None => {
                let mut t = Tensor::zeros(delta.rows(), delta.cols());
                t.axpy(scale, delta);
                *slot = Some(t);
            }
        }
    }

    fn backprop_node(&self, idx: usize, g: &Tensor, grads: &mut Vec<Option<Tensor>>) {
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate_scaled(grads, *a, 1.0, g);
                self.accumulate_scaled(grads, *b, 1.0, g);
            }
            Op::Sub(a, b) => {
                self.accumulate_scaled(grads, *a, 1.0, g);
                self.accumulate_scaled(grads, *b, -1.0, g);
            }
            Op::Mul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let da = elementwise(g, bv);
                let db = elementwise(g, av);
                Self::accumulate(grads, *a, da);
                Self::accumulate(grads, *b, db);
            }
            Op::ScaleConst(a, c) => self.accumulate_scaled(grads, *a, *c, g),
            Op::SMul(s, t) => {
                let sv = self.value(*s).item();
                let tv = self.value(*t);
                let ds: f64 = g.data().iter().zip(tv.data().iter()).map(|(x, y)| x * y).sum();
                Self::accumulate(grads, *s, Tensor::scalar(ds));
                self.accumulate_scaled(grads, *t, sv, g);
            }
            Op::SDiv(t, s) => {
                let sv = self.value(*s).item();
                let tv = self.value(*t);
                self.accumulate_scaled(grads, *t, 1.0 / sv, g);
                let ds: f64 = g
                    .data()
                    .iter()
                    .zip(tv.data().iter())
                    .map(|(gx, tx)| -gx * tx / (sv * sv))
                    .sum();
                Self::accumulate(grads, *s, Tensor::scalar(ds));
            }
            Op::Dot(a, b) => {
                let gv = g.item();
                self.accumulate_scaled(grads, *a, gv, self.value(*b));
                self.accumulate_scaled(grads, *b, gv, self.value(*a));
            }
            Op::Relu(a) => {
                let av = self.value(*a);
                let data = g
                    .data()
                    .iter()
                    .zip(av.data().iter())
                    .map(|(gx, &x)| if x > 0.0 { *gx } else { 0.0 })
                    .collect();
                Self::accumulate(grads, *a, Tensor::from_rows(g.rows(), g.cols(), data));
            }
            Op::L1Norm(a) => {
                let av = self.value(*a);
                let gv = g.item();
                let data = av.data().iter().map(|&x| gv * sign(x)).collect();
                Self::accumulate(grads, *a, Tensor::from_rows(av.rows(), av.cols(), data));
            }
            Op::L2Norm(a) => {
                let av = self.value(*a);
                let n = self.nodes[idx].value.item();
                assert!(n > 0.0, "l2 norm gradient at zero vector");
                self.accumulate_scaled(grads, *a, g.item() / n, av);
            }
            Op::RowSoftmax(a) => {
                let out = &self.nodes[idx].value;
                let mut da = Tensor::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let s = out.row(r);
                    let gr = g.row(r);
                    let inner: f64 = s.iter().zip(gr.iter()).map(|(x, y)| x * y).sum();
                    for ((d, &sv), &gv) in da.row_mut(r).iter_mut().zip(s.iter()).zip(gr.iter()) {
                        *d = sv * (gv - inner);
                    }
                }
                Self::accumulate(grads, *a, da);
            }
            Op::LayerNormRows(a, eps) => {
                let av = self.value(*a);
                let out = &self.nodes[idx].value;
                let n = av.cols() as f64;
                let mut da = Tensor::zeros(av.rows(), av.cols());
                for r in 0..av.rows() {
                    let row = av.row(r);
                    let xhat = out.row(r);
                    let gr = g.row(r);
                    let mean = row.iter().sum::<f64>() / n;
                    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                    let inv = 1.0 / (var + eps).sqrt();
                    let gmean = gr.iter().sum::<f64>() / n;
                    let gx: f64 = gr.iter().zip(xhat.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
                    for ((d, (&gv, &xh)), _) in da
                        .row_mut(r)
                        .iter_mut()
                        .zip(gr.iter().zip(xhat.iter()))
                        .zip(row.iter())
                    {
                        *d = inv * (gv - gmean - xh * gx);
                    }
                }
                Self::accumulate(grads, *a, da);
            }
            Op::LogSumExp(a) => {
                let av = self.value(*a);
                let mut sm = vec![0.0; av.len()];
                softmax_into(av.data(), &mut sm);
                let gv = g.item();
                let data = sm.iter().map(|&s| gv * s).collect();
                Self::accumulate(grads, *a, Tensor::from_rows(av.rows(), av.cols(), data));
            }
            Op::MeanCrossEntropyRows(a, targets) => {
                let av = self.value(*a);
                let gv = g.item() / targets.len() as f64;
                let mut da = Tensor::zeros(av.rows(), av.cols());
                for (r, &t) in targets.iter().enumerate() {
                    let src: Vec<f64> = av.row(r).to_vec();
                    softmax_into(&src, da.row_mut(r));
                    let drow = da.row_mut(r);
                    drow[t] -= 1.0;
                    for d in drow.iter_mut() {
                        *d *= gv;
                    }
                }
                Self::accumulate(grads, *a, da);
            }
            Op::SigmoidBce(a, label) => {
                let z = self.value(*a).item();
                let d = g.item() * (sigmoid(z) - label);
                Self::accumulate(grads, *a, Tensor::scalar(d));
            }
            Op::SoftplusNeg(a) => {
                let x = self.value(*a).item();
                let d = g.item() * (sigmoid(x) - 1.0);
                Self::accumulate(grads, *a, Tensor::scalar(d));
            }
            Op::MatMulNN(a, b) => {
                let da = Tensor::matmul_nt(g, self.value(*b));
                let db = Tensor::matmul_tn(self.value(*a), g);
                Self::accumulate(grads, *a, da);
                Self::accumulate(grads, *b, db);
            }
            Op::MatMulNT(a, b) => {
                let da = Tensor::matmul_nn(g, self.value(*b));
                let db = Tensor::matmul_tn(g, self.value(*a));
                Self::accumulate(grads, *a, da);
                Self::accumulate(grads, *b, db);
            }
            Op::MatVec(w, x) => {
                let wv = self.value(*w);
                let xv = self.value(*x);
                let mut dw = Tensor::zeros(wv.rows(), wv.cols());
                let mut dx = vec![0.0; xv.len()];
                for i in 0..wv.rows() {
                    let gi = g.data()[i];
                    if gi == 0.0 {
                        continue;
                    }
                    let wrow = wv.row(i);
                    let dwrow = dw.row_mut(i);
                    for j in 0..xv.len() {
                        dwrow[j] = gi * xv.data()[j];
                        dx[j] += gi * wrow[j];
                    }
                }
                Self::accumulate(grads, *w, dw);
                Self::accumulate(grads, *x, Tensor::from_vec(dx));
            }
            Op::VecMat(w, m) => {
                let wv = self.value(*w);
                let mv = self.value(*m);
                let mut dw = vec![0.0; wv.len()];
                let mut dm = Tensor::zeros(mv.rows(), mv.cols());
                for k in 0..mv.rows() {
                    let mrow = mv.row(k);
                    dw[k] = mrow.iter().zip(g.data().iter()).map(|(a, b)| a * b).sum();
                    let wk = wv.data()[k];
                    if wk != 0.0 {
                        for (d, &gv) in dm.row_mut(k).iter_mut().zip(g.data().iter()) {
                            *d = wk * gv;
                        }
                    }
                }
                Self::accumulate(grads, *w, Tensor::from_vec(dw));
                Self::accumulate(grads, *m, dm);
            }
            Op::AddRowBroadcast(m, b) => {
                self.accumulate_scaled(grads, *m, 1.0, g);
                let bv = self.value(*b);
                let mut db = vec![0.0; bv.len()];
                for r in 0..g.rows() {
                    for (d, &gv) in db.iter_mut().zip(g.row(r).iter()) {
                        *d += gv;
                    }
                }
                Self::accumulate(grads, *b, Tensor::from_vec(db));
            }
            Op::Rows(table, indices) => {
                let tv = self.value(*table);
                let mut dt = Tensor::zeros(tv.rows(), tv.cols());
                for (r, &i) in indices.iter().enumerate() {
                    for (d, &gv) in dt.row_mut(i).iter_mut().zip(g.row(r).iter()) {
                        *d += gv;
                    }
                }
                Self::accumulate(grads, *table, dt);
            }
            Op::MeanRows(m, start, end) => {
                let mv = self.value(*m);
                let mut dm = Tensor::zeros(mv.rows(), mv.cols());
                let inv = 1.0 / (end - start) as f64;
                for r in *start..*end {
                    for (d, &gv) in dm.row_mut(r).iter_mut().zip(g.data().iter()) {
                        *d += gv * inv;
                    }
                }
                Self::accumulate(grads, *m, dm);
            }
            Op::ConcatVecs(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    let pv = self.value(p);
                    let slice = Tensor::from_rows(
                        pv.rows(),
                        pv.cols(),
                        g.data()[offset..offset + len].to_vec(),
                    );
                    Self::accumulate(grads, p, slice);
                    offset += len;
                }
            }
            Op::StackScalars(parts) => {
                for (k, &p) in parts.iter().enumerate() {
                    Self::accumulate(grads, p, Tensor::scalar(g.data()[k]));
                }
            }
            Op::SumNodes(parts) => {
                for &p in parts {
                    self.accumulate_scaled(grads, p, 1.0, g);
                }
            }
            Op::GcnNeighborSum {
                entities,
                relations,
                index,
            } => {
                let ev = self.value(*entities);
                let rv = self.value(*relations);
                let mut de = Tensor::zeros(ev.rows(), ev.cols());
                let mut dr = Tensor::zeros(rv.rows(), rv.cols());
                for (h, neighbors) in index.iter().enumerate() {
                    let grow = g.row(h);
                    for &(t, r) in neighbors {
                        for (d, &gv) in de.row_mut(t as usize).iter_mut().zip(grow.iter()) {
                            *d += gv;
                        }
                        for (d, &gv) in dr.row_mut(r as usize).iter_mut().zip(grow.iter()) {
                            *d -= gv;
                        }
                    }
                }
                Self::accumulate(grads, *entities, de);
                Self::accumulate(grads, *relations, dr);
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn elementwise(a: &Tensor, b: &Tensor) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| x * y)
        .collect();
    Tensor::from_rows(a.rows(), a.cols(), data)
}

use std::collections::HashMap;

use rand::Rng;

use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Lower clamp applied to probabilities inside the cross-entropy op.
pub const PROB_CLAMP: f64 = 1e-7;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Vec<f64>),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Concat(Var, Var),
    SliceCols { x: Var, start: usize },
    GatherRows { x: Var, idx: Vec<usize> },
    PadRows(Var),
    Softmax(Var),
    SegmentSoftmax { x: Var, offsets: Vec<usize> },
    SegmentWeightedSum { w: Var, v: Var, offsets: Vec<usize> },
    Sum(Var),
    Bce { p: Var, labels: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records every operation of one forward pass so that [`Tape::backward`]
/// can replay them in reverse. Nodes are appended in creation order, so the
/// node list is always topologically sorted.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(ParamId, Var)>,
    param_index: HashMap<ParamId, Var>,
}

/// Gradients of a scalar loss with respect to every tape node that needs one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn as_matrix(shape: &[usize]) -> Option<(usize, usize)> {
    match shape {
        [n] => Some((1, *n)),
        [r, c] => Some((*r, *c)),
        _ => None,
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out[m×n] += a[m×k] · b[k×n]`
fn gemm_acc(out: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
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

    pub fn item(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        let mut value = value;
        value.requires_grad = false;
        value.grad = None;
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn out(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        }
    }

    /// Record an input tensor. It is differentiated iff `requires_grad` is set.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let needs = t.requires_grad;
        self.push(t, Op::Leaf, needs)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Record a parameter. Repeated calls for the same id return the same
    /// node so that every use of a parameter accumulates into one gradient.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.param_index.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Leaf, true);
        self.param_index.insert(id, v);
        self.params.push((id, v));
        v
    }

    pub fn param_leaves(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.params.iter().copied()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let ((m, k), (k2, n)) = match (as_matrix(&sa), as_matrix(&sb)) {
            (Some(x), Some(y)) if sb.len() == 2 => (x, y),
            _ => return Err(Error::dim("matmul", &sa, &sb)),
        };
        if k != k2 {
            return Err(Error::dim("matmul", &sa, &sb));
        }
        let mut data = vec![0.0; m * n];
        gemm_acc(&mut data, self.data(a), self.data(b), m, k, n);
        let shape = if sa.len() == 1 { vec![n] } else { vec![m, n] };
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Self::out(shape, data), Op::MatMul(a, b), needs))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(name, self.shape(a), self.shape(b)));
        }
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Self::out(shape, data), op, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("hadamard", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Add a bias vector of length `cols(x)` to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let c = self.value(x).cols();
        if self.value(bias).numel() != c {
            return Err(Error::dim("add_bias", self.shape(x), self.shape(bias)));
        }
        let b = self.data(bias);
        let data = self
            .data(x)
            .chunks(c.max(1))
            .flat_map(|row| row.iter().zip(b).map(|(v, w)| v + w))
            .collect::<Vec<_>>();
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.push(Self::out(shape, data), Op::AddBias(x, bias), needs))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let data = self.data(x).iter().map(|v| v * c).collect();
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x);
        self.push(Self::out(shape, data), Op::Scale(x, c), needs)
    }

    /// Element-wise product with a constant (non-differentiated) mask.
    pub fn mul_const(&mut self, x: Var, mask: Vec<f64>) -> Result<Var> {
        if mask.len() != self.value(x).numel() {
            return Err(Error::dim("mul_const", self.shape(x), &[mask.len()]));
        }
        let data = self.data(x).iter().zip(&mask).map(|(v, m)| v * m).collect();
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x);
        Ok(self.push(Self::out(shape, data), Op::MulConst(x, mask), needs))
    }

    /// Multiply row `r` of `x` by `row_mask[r]`.
    pub fn mask_rows(&mut self, x: Var, row_mask: &[f64]) -> Result<Var> {
        let (r, c) = (self.value(x).rows(), self.value(x).cols());
        if row_mask.len() != r {
            return Err(Error::dim("mask_rows", self.shape(x), &[row_mask.len()]));
        }
        let mask = row_mask
            .iter()
            .flat_map(|&m| std::iter::repeat_n(m, c))
            .collect();
        self.mul_const(x, mask)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let data = self.data(x).iter().map(|v| f(*v)).collect();
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x);
        self.push(Self::out(shape, data), op, needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    /// Concatenate along the last dimension.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.is_empty() || sb.is_empty() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(Error::dim("concat", sa, sb));
        }
        let (ca, cb) = (self.value(a).cols(), self.value(b).cols());
        let rows = self.value(a).rows();
        let mut data = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            data.extend_from_slice(&self.data(a)[r * ca..(r + 1) * ca]);
            data.extend_from_slice(&self.data(b)[r * cb..(r + 1) * cb]);
        }
        let mut shape = sa.to_vec();
        *shape.last_mut().unwrap() = ca + cb;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Self::out(shape, data), Op::Concat(a, b), needs))
    }

    /// Columns `start..start+len` of every row.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let c = self.value(x).cols();
        if start + len > c {
            return Err(Error::Shape(format!(
                "slice {}..{} out of {} columns",
                start,
                start + len,
                c
            )));
        }
        let data = self
            .data(x)
            .chunks(c.max(1))
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let mut shape = self.shape(x).to_vec();
        *shape.last_mut().unwrap() = len;
        let needs = self.needs(x);
        Ok(self.push(Self::out(shape, data), Op::SliceCols { x, start }, needs))
    }

    /// Select rows of a 2-D tensor (embedding lookup). Repeated indices are
    /// allowed; their gradients are summed.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let (r, c) = as_matrix(self.shape(x))
            .ok_or_else(|| Error::Shape(format!("gather on shape {:?}", self.shape(x))))?;
        if let Some(bad) = idx.iter().find(|&&i| i >= r) {
            return Err(Error::Lookup(format!("row {bad} out of range 0..{r}")));
        }
        let src = self.data(x);
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        let needs = self.needs(x);
        Ok(self.push(
            Self::out(vec![idx.len(), c], data),
            Op::GatherRows {
                x,
                idx: idx.to_vec(),
            },
            needs,
        ))
    }

    /// Append `extra` zero rows to a 2-D tensor.
    pub fn pad_rows(&mut self, x: Var, extra: usize) -> Result<Var> {
        let (r, c) = as_matrix(self.shape(x))
            .ok_or_else(|| Error::Shape(format!("pad_rows on shape {:?}", self.shape(x))))?;
        let mut data = self.data(x).to_vec();
        data.resize((r + extra) * c, 0.0);
        let needs = self.needs(x);
        Ok(self.push(Self::out(vec![r + extra, c], data), Op::PadRows(x), needs))
    }

    /// Softmax over all elements of `x`, computed with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        if self.value(x).numel() == 0 {
            return Err(Error::Domain("softmax of an empty tensor".into()));
        }
        let data = softmax_slice(self.data(x));
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x);
        Ok(self.push(Self::out(shape, data), Op::Softmax(x), needs))
    }

    /// Independent softmax over each segment `offsets[s]..offsets[s+1]` of a
    /// score column. Empty segments are allowed and produce nothing.
    pub fn segment_softmax(&mut self, x: Var, offsets: &[usize]) -> Result<Var> {
        let n = self.value(x).numel();
        check_offsets(offsets, n)?;
        let src = self.data(x);
        let mut data = vec![0.0; n];
        for w in offsets.windows(2) {
            if w[1] > w[0] {
                data[w[0]..w[1]].copy_from_slice(&softmax_slice(&src[w[0]..w[1]]));
            }
        }
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x);
        Ok(self.push(
            Self::out(shape, data),
            Op::SegmentSoftmax {
                x,
                offsets: offsets.to_vec(),
            },
            needs,
        ))
    }

    /// `out[s] = Σ_{n in segment s} w[n] · v[n]`, summed in row order.
    /// Empty segments give a zero row.
    pub fn segment_weighted_sum(&mut self, w: Var, v: Var, offsets: &[usize]) -> Result<Var> {
        let n = self.value(v).rows();
        if self.value(w).numel() != n {
            return Err(Error::dim(
                "segment_weighted_sum",
                self.shape(w),
                self.shape(v),
            ));
        }
        check_offsets(offsets, n)?;
        let c = self.value(v).cols();
        let segs = offsets.len() - 1;
        let (wd, vd) = (self.data(w), self.data(v));
        let mut data = vec![0.0; segs * c];
        for s in 0..segs {
            let out = &mut data[s * c..(s + 1) * c];
            for r in offsets[s]..offsets[s + 1] {
                let wr = wd[r];
                for (o, x) in out.iter_mut().zip(&vd[r * c..(r + 1) * c]) {
                    *o += wr * x;
                }
            }
        }
        let needs = self.needs(w) || self.needs(v);
        Ok(self.push(
            Self::out(vec![segs, c], data),
            Op::SegmentWeightedSum {
                w,
                v,
                offsets: offsets.to_vec(),
            },
            needs,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().sum();
        let needs = self.needs(x);
        self.push(Self::out(vec![1], vec![s]), Op::Sum(x), needs)
    }

    /// Mean binary cross-entropy of probabilities `p` against 0/1 labels.
    /// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
    pub fn bce(&mut self, p: Var, labels: &[f64]) -> Result<Var> {
        let n = self.value(p).numel();
        if n == 0 {
            return Err(Error::Domain("cross-entropy over an empty set".into()));
        }
        if labels.len() != n {
            return Err(Error::dim("bce", self.shape(p), &[labels.len()]));
        }
        let loss = -self
            .data(p)
            .iter()
            .zip(labels)
            .map(|(&p, &y)| {
                let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                y * pc.ln() + (1.0 - y) * (1.0 - pc).ln()
            })
            .sum::<f64>()
            / n as f64;
        let needs = self.needs(p);
        Ok(self.push(
            Self::out(vec![1], vec![loss]),
            Op::Bce {
                p,
                labels: labels.to_vec(),
            },
            needs,
        ))
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1 / (1 - rate)`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Domain(format!("dropout rate {rate} not in [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask = (0..self.value(x).numel())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        self.mul_const(x, mask)
    }

    /// Reverse sweep from a scalar `loss`. Gradients accumulate (`+=`) into
    /// every node reachable from the loss that needs one.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::Shape("backward on an empty tape".into()));
        }
        if !self.value(loss).is_scalar() {
            return Err(Error::Shape(format!(
                "loss must be scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for (i, g) in grads.iter_mut().enumerate() {
            if !self.nodes[i].needs_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        let n = self.nodes[v.0].value.numel();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = as_matrix(self.shape(*a)).unwrap();
                let (_, n) = as_matrix(self.shape(*b)).unwrap();
                let (ad, bd) = (self.data(*a), self.data(*b));
                if let Some(ga) = self.acc(grads, *a) {
                    // ga[m×k] += g[m×n] · bᵀ
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bd[p * n..(p + 1) * n];
                            ga[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    // gb[k×n] += aᵀ · g
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av = ad[i * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for (o, gv) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *o += av * gv;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(d, s)| *d += s);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    gb.iter_mut().zip(g).for_each(|(d, s)| *d += s);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(d, s)| *d += s);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    gb.iter_mut().zip(g).for_each(|(d, s)| *d -= s);
                }
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                if let Some(ga) = self.acc(grads, *a) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * bd[i];
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for i in 0..g.len() {
                        gb[i] += g[i] * ad[i];
                    }
                }
            }
            Op::AddBias(x, bias) => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(d, s)| *d += s);
                }
                let c = out.cols().max(1);
                if let Some(gb) = self.acc(grads, *bias) {
                    for row in g.chunks(c) {
                        gb.iter_mut().zip(row).for_each(|(d, s)| *d += s);
                    }
                }
            }
            Op::Scale(x, c) => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(d, s)| *d += c * s);
                }
            }
            Op::MulConst(x, mask) => {
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..g.len() {
                        gx[i] += g[i] * mask[i];
                    }
                }
            }
            Op::Sigmoid(x) => {
                let y = out.data();
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..g.len() {
                        gx[i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                }
            }
            Op::Tanh(x) => {
                let y = out.data();
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..g.len() {
                        gx[i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                }
            }
            Op::Relu(x) => {
                let xd = self.data(*x);
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..g.len() {
                        if xd[i] > 0.0 {
                            gx[i] += g[i];
                        }
                    }
                }
            }
            Op::Concat(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                let w = ca + cb;
                if let Some(ga) = self.acc(grads, *a) {
                    for (r, row) in g.chunks(w.max(1)).enumerate() {
                        ga[r * ca..(r + 1) * ca]
                            .iter_mut()
                            .zip(&row[..ca])
                            .for_each(|(d, s)| *d += s);
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for (r, row) in g.chunks(w.max(1)).enumerate() {
                        gb[r * cb..(r + 1) * cb]
                            .iter_mut()
                            .zip(&row[ca..])
                            .for_each(|(d, s)| *d += s);
                    }
                }
            }
            Op::SliceCols { x, start } => {
                let c = self.value(*x).cols();
                let len = out.cols();
                if let Some(gx) = self.acc(grads, *x) {
                    for (r, row) in g.chunks(len.max(1)).enumerate() {
                        gx[r * c + start..r * c + start + len]
                            .iter_mut()
                            .zip(row)
                            .for_each(|(d, s)| *d += s);
                    }
                }
            }
            Op::GatherRows { x, idx } => {
                let c = out.cols();
                if let Some(gx) = self.acc(grads, *x) {
                    for (k, &i) in idx.iter().enumerate() {
                        gx[i * c..(i + 1) * c]
                            .iter_mut()
                            .zip(&g[k * c..(k + 1) * c])
                            .for_each(|(d, s)| *d += s);
                    }
                }
            }
            Op::PadRows(x) => {
                if let Some(gx) = self.acc(grads, *x) {
                    let n = gx.len();
                    gx.iter_mut().zip(&g[..n]).for_each(|(d, s)| *d += s);
                }
            }
            Op::Softmax(x) => {
                let y = out.data();
                if let Some(gx) = self.acc(grads, *x) {
                    let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                    for i in 0..g.len() {
                        gx[i] += y[i] * (g[i] - dot);
                    }
                }
            }
            Op::SegmentSoftmax { x, offsets } => {
                let y = out.data();
                if let Some(gx) = self.acc(grads, *x) {
                    for w in offsets.windows(2) {
                        let r = w[0]..w[1];
                        let dot: f64 = g[r.clone()]
                            .iter()
                            .zip(&y[r.clone()])
                            .map(|(a, b)| a * b)
                            .sum();
                        for i in r {
                            gx[i] += y[i] * (g[i] - dot);
                        }
                    }
                }
            }
            Op::SegmentWeightedSum { w, v, offsets } => {
                let c = self.value(*v).cols();
                let (wd, vd) = (self.data(*w), self.data(*v));
                if let Some(gw) = self.acc(grads, *w) {
                    for (s, seg) in offsets.windows(2).enumerate() {
                        let gs = &g[s * c..(s + 1) * c];
                        for r in seg[0]..seg[1] {
                            gw[r] += gs
                                .iter()
                                .zip(&vd[r * c..(r + 1) * c])
                                .map(|(a, b)| a * b)
                                .sum::<f64>();
                        }
                    }
                }
                if let Some(gv) = self.acc(grads, *v) {
                    for (s, seg) in offsets.windows(2).enumerate() {
                        let gs = &g[s * c..(s + 1) * c];
                        for r in seg[0]..seg[1] {
                            let wr = wd[r];
                            gv[r * c..(r + 1) * c]
                                .iter_mut()
                                .zip(gs)
                                .for_each(|(d, s)| *d += wr * s);
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Bce { p, labels } => {
                let pd = self.data(*p);
                let n = labels.len() as f64;
                if let Some(gp) = self.acc(grads, *p) {
                    for i in 0..labels.len() {
                        let pv = pd[i];
                        if pv <= PROB_CLAMP || pv >= 1.0 - PROB_CLAMP {
                            continue;
                        }
                        let y = labels[i];
                        gp[i] += g[0] * (-y / pv + (1.0 - y) / (1.0 - pv)) / n;
                    }
                }
            }
        }
    }
}

fn check_offsets(offsets: &[usize], n: usize) -> Result<()> {
    let ok = offsets.first() == Some(&0)
        && offsets.last() == Some(&n)
        && offsets.windows(2).all(|w| w[0] <= w[1]);
    if ok {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "segment offsets must run from 0 to {n} non-decreasingly"
        )))
    }
}

fn softmax_slice(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

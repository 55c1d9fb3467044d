use super::kernels::{self, ConvDims};
use super::{Scalar, Tensor};
use crate::error::{dim_err, Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, dims: ConvDims },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Scale(Var, T),
    Matmul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Transpose { x: Var, rows: usize, cols: usize },
    Reshape(Var),
    Gather { x: Var, index: Vec<u32> },
    Concat(Vec<Var>),
    Upsample { x: Var, c: usize, src: (usize, usize), dst: (usize, usize) },
    SoftmaxRows { x: Var, cols: usize },
    SoftmaxCe { logits: Var, target: usize, probs: Vec<T> },
    Mse { pred: Var, target: Var },
    Sum(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Recording tape for one forward pass. Values are immutable once recorded;
/// [`Graph::backward`] walks the tape in exact reverse recording order.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Index strides of an operand broadcast against an output shape.
fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for r in 0..rank {
        let da = if r + a.len() >= rank { a[r + a.len() - rank] } else { 1 };
        let db = if r + b.len() >= rank { b[r + b.len() - rank] } else { 1 };
        out[r] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return dim_err(format!("shapes {a:?} and {b:?} do not broadcast")),
        };
    }
    Ok(out)
}

fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let pad = out.len() - shape.len();
    let mut strides = vec![0; out.len()];
    let mut acc = 1;
    for r in (0..shape.len()).rev() {
        strides[r + pad] = if shape[r] == 1 { 0 } else { acc };
        acc *= shape[r];
    }
    strides
}

/// When `small` equals `out` on a leading prefix of axes and is 1 on the rest,
/// each element of `small` covers a contiguous run of this many outputs.
fn block_broadcast(small: &[usize], out: &[usize]) -> Option<usize> {
    let pad = out.len().checked_sub(small.len())?;
    if pad > 0 {
        return None;
    }
    let k = small.iter().zip(out).take_while(|(a, b)| a == b).count();
    small[k..].iter().all(|&d| d == 1).then(|| out[k..].iter().product())
}

/// Visit `(out_index, a_index, b_index)` for every output element.
fn for_each_broadcast(
    out: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let n: usize = out.iter().product();
    let rank = out.len();
    let mut idx = vec![0usize; rank];
    let (mut ia, mut ib) = (0usize, 0usize);
    for o in 0..n {
        f(o, ia, ib);
        for r in (0..rank).rev() {
            idx[r] += 1;
            ia += sa[r];
            ib += sb[r];
            if idx[r] < out[r] {
                break;
            }
            ia -= sa[r] * out[r];
            ib -= sb[r] * out[r];
            idx[r] = 0;
        }
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    /// Gradient populated by the last [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad
    }

    fn push(&mut self, mut value: Tensor<T>, op: Op<T>, inputs: &[Var], name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        value.requires_grad = inputs.iter().any(|&v| self.requires_grad(v));
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Constant input; no gradient is tracked.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        let mut t = t;
        t.requires_grad = false;
        t.grad = None;
        self.nodes.push(Node { value: t, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        let mut t = t;
        t.requires_grad = true;
        t.grad = None;
        self.nodes.push(Node { value: t, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, dilation: usize) -> Result<Var> {
        let (c_in, h, wd) = self.value(x).chw()?;
        let dims = match *self.shape(w) {
            [c_out, wc, k, k2] if wc == c_in && k == k2 && k % 2 == 1 => ConvDims {
                c_in,
                c_out,
                h,
                w: wd,
                k,
                dilation,
            },
            ref s => {
                return dim_err(format!(
                    "conv2d weight {s:?} incompatible with input {:?} (need [C_out,{c_in},k,k], k odd)",
                    self.shape(x)
                ))
            }
        };
        if dilation == 0 {
            return dim_err("dilation must be at least 1");
        }
        let y = kernels::conv2d_forward(self.data(x), self.data(w), dims);
        let t = Tensor::new(&[dims.c_out, h, wd], y)?;
        self.push(t, Op::Conv2d { x, w, dims }, &[x, w], "conv2d")
    }

    fn binary(&mut self, a: Var, b: Var, mul: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let out_shape = broadcast_shape(&sa, &sb)?;
        let (da, db) = (self.data(a), self.data(b));
        let data = if sa == sb {
            da.iter()
                .zip(db)
                .map(|(&x, &y)| if mul { x * y } else { x + y })
                .collect()
        } else if let (true, Some(inner)) = (sa == out_shape, block_broadcast(&sb, &out_shape)) {
            da.chunks(inner)
                .zip(db)
                .flat_map(|(run, &y)| run.iter().map(move |&x| if mul { x * y } else { x + y }))
                .collect()
        } else {
            let st_a = broadcast_strides(&sa, &out_shape);
            let st_b = broadcast_strides(&sb, &out_shape);
            let mut out = vec![T::zero(); out_shape.iter().product()];
            for_each_broadcast(&out_shape, &st_a, &st_b, |o, ia, ib| {
                out[o] = if mul { da[ia] * db[ib] } else { da[ia] + db[ib] };
            });
            out
        };
        let t = Tensor::new(&out_shape, data)?;
        if mul {
            self.push(t, Op::Mul { a, b }, &[a, b], "mul")
        } else {
            self.push(t, Op::Add { a, b }, &[a, b], "add")
        }
    }

    /// Elementwise sum with broadcasting of size-1 axes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, false)
    }

    /// Elementwise product with broadcasting of size-1 axes.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, true)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let nb = self.scale(b, T::one().neg())?;
        self.add(a, nb)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(t, Op::Relu(x), &[x], "relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(sigmoid);
        self.push(t, Op::Sigmoid(x), &[x], "sigmoid")
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(T::exp);
        self.push(t, Op::Exp(x), &[x], "exp")
    }

    pub fn scale(&mut self, x: Var, k: T) -> Result<Var> {
        let t = self.value(x).map(|v| v * k);
        self.push(t, Op::Scale(x, k), &[x], "scale")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k, n) = match (self.shape(a), self.shape(b)) {
            (&[m, k], &[k2, n]) if k == k2 => (m, k, n),
            (sa, sb) => return dim_err(format!("matmul of {sa:?} and {sb:?}")),
        };
        let y = kernels::matmul(self.data(a), self.data(b), m, k, n);
        let t = Tensor::new(&[m, n], y)?;
        self.push(t, Op::Matmul { a, b, m, k, n }, &[a, b], "matmul")
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = match *self.shape(x) {
            [r, c] => (r, c),
            ref s => return dim_err(format!("transpose needs a matrix, got {s:?}")),
        };
        let y = kernels::transpose(self.data(x), rows, cols);
        let t = Tensor::new(&[cols, rows], y)?;
        self.push(t, Op::Transpose { x, rows, cols }, &[x], "transpose")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        self.push(t, Op::Reshape(x), &[x], "reshape")
    }

    /// `y[i] = x.flat[index[i]]`; the backward pass scatter-adds.
    pub fn gather(&mut self, x: Var, index: Vec<u32>, shape: &[usize]) -> Result<Var> {
        let src = self.data(x);
        if let Some(&bad) = index.iter().find(|&&i| i as usize >= src.len()) {
            return Err(Error::Index {
                index: bad as usize,
                len: src.len(),
            });
        }
        let data = index.iter().map(|&i| src[i as usize]).collect();
        let t = Tensor::new(shape, data)?;
        self.push(t, Op::Gather { x, index }, &[x], "gather")
    }

    /// Slice `len` entries starting at `start` along the leading axis.
    pub fn narrow(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if len == 0 || start + len > shape[0] {
            return dim_err(format!("narrow {start}..{} of axis of size {}", start + len, shape[0]));
        }
        let inner: usize = shape[1..].iter().product();
        let index = (start * inner..(start + len) * inner).map(|i| i as u32).collect();
        let mut out = shape;
        out[0] = len;
        self.gather(x, index, &out)
    }

    /// Concatenate along the leading axis; trailing axes must agree.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return dim_err("concat of zero tensors");
        };
        let tail = self.shape(first)[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &x in xs {
            let s = self.shape(x);
            if s[1..] != tail[..] {
                return dim_err(format!("concat of {s:?} with trailing axes {tail:?}"));
            }
            lead += s[0];
            data.extend_from_slice(self.data(x));
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(&tail);
        let t = Tensor::new(&shape, data)?;
        self.push(t, Op::Concat(xs.to_vec()), xs, "concat")
    }

    /// Align-corners-false bilinear resize of a `[C,h,w]` map.
    pub fn bilinear_upsample(&mut self, x: Var, oh: usize, ow: usize) -> Result<Var> {
        let (c, h, w) = self.value(x).chw()?;
        if oh == 0 || ow == 0 || !oh.is_multiple_of(h) || !ow.is_multiple_of(w) {
            return dim_err(format!("upsample {h}x{w} to {oh}x{ow} needs an integer factor"));
        }
        let y = kernels::bilinear_forward(self.data(x), c, (h, w), (oh, ow));
        let t = Tensor::new(&[c, oh, ow], y)?;
        let op = Op::Upsample { x, c, src: (h, w), dst: (oh, ow) };
        self.push(t, op, &[x], "bilinear_upsample")
    }

    /// Max over each `(H/h)×(W/w)` window.
    pub fn max_downsample(&mut self, x: Var, oh: usize, ow: usize) -> Result<Var> {
        let (c, h, w) = self.value(x).chw()?;
        if oh == 0 || ow == 0 || h % oh != 0 || w % ow != 0 {
            return dim_err(format!("max_downsample {h}x{w} to {oh}x{ow} needs an integer window"));
        }
        let index = kernels::max_downsample_index(self.data(x), c, (h, w), (oh, ow));
        self.gather(x, index, &[c, oh, ow])
    }

    /// Softmax over the last axis of a matrix.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let cols = *shape.last().expect("tensors have rank >= 1");
        // Row by row so each copy is still in cache when it is normalised.
        let mut y = Vec::with_capacity(self.value(x).numel());
        for row in self.data(x).chunks(cols) {
            let start = y.len();
            y.extend_from_slice(row);
            softmax_in_place(&mut y[start..]);
        }
        let t = Tensor::new(&shape, y)?;
        self.push(t, Op::SoftmaxRows { x, cols }, &[x], "softmax_rows")
    }

    /// `−log softmax(logits)[target]` over the flattened logits.
    pub fn softmax_ce(&mut self, logits: Var, target: usize) -> Result<Var> {
        let n = self.value(logits).numel();
        if target >= n {
            return Err(Error::Index { index: target, len: n });
        }
        let mut probs = self.data(logits).to_vec();
        let lse = log_sum_exp(&probs);
        let loss = lse - probs[target];
        for p in probs.iter_mut() {
            *p = (*p - lse).exp();
        }
        let t = Tensor::scalar(loss);
        self.push(t, Op::SoftmaxCe { logits, target, probs }, &[logits], "softmax_ce")
    }

    /// Mean squared difference.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return dim_err(format!(
                "mse of {:?} against {:?}",
                self.shape(pred),
                self.shape(target)
            ));
        }
        let n = T::from_usize(self.value(pred).numel()).expect("size fits");
        let s: T = self
            .data(pred)
            .iter()
            .zip(self.data(target))
            .map(|(&p, &q)| (p - q) * (p - q))
            .sum();
        self.push(Tensor::scalar(s / n), Op::Mse { pred, target }, &[pred, target], "mse")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: T = self.data(x).iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x], "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = T::from_usize(self.value(x).numel()).expect("size fits");
        let s = self.sum(x)?;
        self.scale(s, T::one() / n)
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if self.nodes[id].value.requires_grad {
                self.propagate(id, &g, &mut grads);
            }
            self.nodes[id].value.grad = Some(g);
        }
        Ok(())
    }

    /// Clear gradients left by a previous sweep.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.value.grad = None;
        }
    }

    fn propagate(&self, id: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[id];
        let out = node.value.data();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            if self.requires_grad(v) {
                let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); self.value(v).numel()]);
                f(slot);
            }
        };
        match &node.op {
            Op::Leaf => {}
            &Op::Conv2d { x, w, dims } => {
                let (gx, gw) = kernels::conv2d_backward(
                    g,
                    self.data(x),
                    self.data(w),
                    dims,
                    self.requires_grad(x),
                    self.requires_grad(w),
                );
                if let Some(gx) = gx {
                    acc(x, &mut |s| add_into(s, &gx));
                }
                if let Some(gw) = gw {
                    acc(w, &mut |s| add_into(s, &gw));
                }
            }
            &Op::Add { a, b } | &Op::Mul { a, b } => {
                let mul = matches!(node.op, Op::Mul { .. });
                let out_shape = node.value.shape();
                for (this, other) in [(a, b), (b, a)] {
                    let st_t = broadcast_strides(self.shape(this), out_shape);
                    let st_o = broadcast_strides(self.shape(other), out_shape);
                    let od = self.data(other);
                    let same = self.shape(this) == out_shape;
                    acc(this, &mut |s| {
                        if same && self.shape(other) == out_shape {
                            for i in 0..g.len() {
                                s[i] += if mul { g[i] * od[i] } else { g[i] };
                            }
                        } else if let (true, Some(inner)) =
                            (self.shape(other) == out_shape, block_broadcast(self.shape(this), out_shape))
                        {
                            for ((si, gr), orun) in s.iter_mut().zip(g.chunks(inner)).zip(od.chunks(inner)) {
                                *si += if mul {
                                    gr.iter().zip(orun).map(|(&a, &b)| a * b).sum()
                                } else {
                                    gr.iter().copied().sum()
                                };
                            }
                        } else if let (true, Some(inner)) = (same, block_broadcast(self.shape(other), out_shape)) {
                            for ((sr, gr), &ov) in s.chunks_mut(inner).zip(g.chunks(inner)).zip(od) {
                                for (a, &b) in sr.iter_mut().zip(gr) {
                                    *a += if mul { b * ov } else { b };
                                }
                            }
                        } else {
                            for_each_broadcast(out_shape, &st_t, &st_o, |o, it, io| {
                                s[it] += if mul { g[o] * od[io] } else { g[o] };
                            });
                        }
                    });
                }
            }
            &Op::Relu(x) => acc(x, &mut |s| {
                for i in 0..g.len() {
                    if out[i] > T::zero() {
                        s[i] += g[i];
                    }
                }
            }),
            &Op::Sigmoid(x) => acc(x, &mut |s| {
                for i in 0..g.len() {
                    s[i] += g[i] * out[i] * (T::one() - out[i]);
                }
            }),
            &Op::Exp(x) => acc(x, &mut |s| {
                for i in 0..g.len() {
                    s[i] += g[i] * out[i];
                }
            }),
            &Op::Scale(x, k) => acc(x, &mut |s| {
                for i in 0..g.len() {
                    s[i] += g[i] * k;
                }
            }),
            &Op::Matmul { a, b, m, k, n } => {
                if self.requires_grad(a) {
                    let ga = kernels::matmul_nt(g, self.data(b), m, n, k);
                    acc(a, &mut |s| add_into(s, &ga));
                }
                if self.requires_grad(b) {
                    let gb = kernels::matmul_tn(self.data(a), g, m, k, n);
                    acc(b, &mut |s| add_into(s, &gb));
                }
            }
            &Op::Transpose { x, rows, cols } => {
                let gx = kernels::transpose(g, cols, rows);
                acc(x, &mut |s| add_into(s, &gx));
            }
            &Op::Reshape(x) | &Op::Sum(x) => {
                let sum = matches!(node.op, Op::Sum(_));
                acc(x, &mut |s| {
                    if sum {
                        s.iter_mut().for_each(|v| *v += g[0]);
                    } else {
                        add_into(s, g);
                    }
                });
            }
            Op::Gather { x, index } => acc(*x, &mut |s| {
                for (&i, &gv) in index.iter().zip(g) {
                    s[i as usize] += gv;
                }
            }),
            Op::Concat(xs) => {
                let mut offset = 0;
                for &x in xs {
                    let n = self.value(x).numel();
                    acc(x, &mut |s| add_into(s, &g[offset..offset + n]));
                    offset += n;
                }
            }
            &Op::Upsample { x, c, src, dst } => {
                let gx = kernels::bilinear_backward(g, c, src, dst);
                acc(x, &mut |s| add_into(s, &gx));
            }
            &Op::SoftmaxRows { x, cols } => acc(x, &mut |s| {
                for (r, (yr, gr)) in out.chunks(cols).zip(g.chunks(cols)).enumerate() {
                    let inner: T = yr.iter().zip(gr).map(|(&y, &gv)| y * gv).sum();
                    for j in 0..cols {
                        s[r * cols + j] += yr[j] * (gr[j] - inner);
                    }
                }
            }),
            Op::SoftmaxCe { logits, target, probs } => acc(*logits, &mut |s| {
                for (i, &p) in probs.iter().enumerate() {
                    let ind = if i == *target { T::one() } else { T::zero() };
                    s[i] += g[0] * (p - ind);
                }
            }),
            &Op::Mse { pred, target } => {
                let n = T::from_usize(self.value(pred).numel()).expect("size fits");
                let two = T::one() + T::one();
                let (p, q) = (self.data(pred), self.data(target));
                acc(pred, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[0] * two * (p[i] - q[i]) / n;
                    }
                });
                acc(target, &mut |s| {
                    for i in 0..s.len() {
                        s[i] -= g[0] * two * (p[i] - q[i]) / n;
                    }
                });
            }
        }
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let s: T = xs.iter().map(|&v| (v - m).exp()).sum();
    m + s.ln()
}

fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut s = T::zero();
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}

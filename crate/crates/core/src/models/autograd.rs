//! A small reverse-mode tape over dense `f64` tensors.
//!
//! Only the handful of operations the toy segmenters and the sequence
//! classifier need are provided. Every op records what its backward pass
//! needs at forward time; `Graph::backward` then walks the tape in reverse
//! and accumulates parameter gradients into caller-owned buffers.
//!
//! Image tensors are laid out `[C, H, W]` (one sample per graph); vectors
//! are `[n]`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data mismatch");
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self { shape: vec![1], data: vec![v] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(&self.shape)
    }
}

/// Named, ordered parameter arrays of one model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamId(pub usize);

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.tensors.iter().map(Tensor::zeros_like).collect()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// SHA-256 over names, shapes and little-endian values, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.iter() {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
            h.update((t.shape.len() as u64).to_le_bytes());
            for &d in &t.shape {
                h.update((d as u64).to_le_bytes());
            }
            for &v in &t.data {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Value {
    Owned(Tensor),
    Param(usize),
}

enum Op {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var, k: usize, cols: Vec<f64> },
    MaxPool2 { x: Var, argmax: Vec<usize> },
    Upsample2 { x: Var },
    Concat { a: Var, b: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Relu { x: Var },
    Sigmoid { x: Var },
    Tanh { x: Var },
    MatVec { w: Var, x: Var },
    Slice { x: Var, start: usize },
    SoftmaxCe { logits: Var, target: Vec<u8>, probs: Vec<f64> },
    BceLogits { x: Var, target: f64 },
}

struct Node {
    value: Value,
    op: Op,
}

/// One forward pass worth of recorded operations.
pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
}

/// `C[m,n] = A[m,k] · B[k,n] + beta · C`, with either operand optionally
/// stored transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds asserted above; strides describe exactly those buffers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
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

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self { params, nodes: Vec::new() }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(i) => &self.params.tensors[*i],
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value: Value::Owned(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node { value: Value::Param(id.0), op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    /// Same-padded, stride-1 2D convolution with odd square kernel.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xs = self.value(x).shape.clone();
        let ws = self.value(w).shape.clone();
        assert_eq!(xs.len(), 3, "conv2d expects [C,H,W]");
        assert_eq!(ws.len(), 4);
        let (c, h, wd) = (xs[0], xs[1], xs[2]);
        let (o, k) = (ws[0], ws[2]);
        assert_eq!(ws[1], c, "conv2d channel mismatch");
        assert_eq!(ws[3], k);
        assert_eq!(k % 2, 1);
        let hw = h * wd;
        let ckk = c * k * k;
        let cols = if k == 1 {
            Vec::new()
        } else {
            im2col(&self.value(x).data, c, h, wd, k)
        };
        let mut out = vec![0.0; o * hw];
        let bias = &self.value(b).data;
        for (oi, row) in out.chunks_mut(hw).enumerate() {
            row.fill(bias[oi]);
        }
        {
            let src = if k == 1 { &self.value(x).data } else { &cols };
            gemm(o, ckk, hw, &self.value(w).data, false, src, false, 1.0, &mut out);
        }
        self.push(Tensor::new(vec![o, h, wd], out), Op::Conv2d { x, w, b, k, cols })
    }

    pub fn max_pool2(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (c, h, w) = (t.shape[0], t.shape[1], t.shape[2]);
        assert!(h % 2 == 0 && w % 2 == 0, "max_pool2 needs even spatial dims");
        let (oh, ow) = (h / 2, w / 2);
        let mut out = vec![0.0; c * oh * ow];
        let mut argmax = vec![0usize; c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = usize::MAX;
                    let mut bv = f64::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let idx = (ch * h + 2 * y + dy) * w + 2 * xx + dx;
                            if t.data[idx] > bv || best == usize::MAX {
                                bv = t.data[idx];
                                best = idx;
                            }
                        }
                    }
                    let o = (ch * oh + y) * ow + xx;
                    out[o] = bv;
                    argmax[o] = best;
                }
            }
        }
        self.push(Tensor::new(vec![c, oh, ow], out), Op::MaxPool2 { x, argmax })
    }

    pub fn upsample2(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (c, h, w) = (t.shape[0], t.shape[1], t.shape[2]);
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                let src = (ch * h + y / 2) * w;
                let dst = (ch * oh + y) * ow;
                for xx in 0..ow {
                    out[dst + xx] = t.data[src + xx / 2];
                }
            }
        }
        self.push(Tensor::new(vec![c, oh, ow], out), Op::Upsample2 { x })
    }

    /// Concatenate along the leading axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape[1..], tb.shape[1..], "concat trailing dims differ");
        let mut shape = ta.shape.clone();
        shape[0] += tb.shape[0];
        let mut data = Vec::with_capacity(ta.len() + tb.len());
        data.extend_from_slice(&ta.data);
        data.extend_from_slice(&tb.data);
        self.push(Tensor::new(shape, data), Op::Concat { a, b })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape, tb.shape, "add shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect();
        let shape = ta.shape.clone();
        self.push(Tensor::new(shape, data), Op::Add { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape, tb.shape, "mul shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
        let shape = ta.shape.clone();
        self.push(Tensor::new(shape, data), Op::Mul { a, b })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let data = t.data.iter().map(|&v| v.max(0.0)).collect();
        let shape = t.shape.clone();
        self.push(Tensor::new(shape, data), Op::Relu { x })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let data = t.data.iter().map(|&v| sigmoid(v)).collect();
        let shape = t.shape.clone();
        self.push(Tensor::new(shape, data), Op::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let data = t.data.iter().map(|&v| v.tanh()).collect();
        let shape = t.shape.clone();
        self.push(Tensor::new(shape, data), Op::Tanh { x })
    }

    /// `w[o,i] · x[i]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Var {
        let (tw, tx) = (self.value(w), self.value(x));
        assert_eq!(tw.shape.len(), 2);
        let (o, i) = (tw.shape[0], tw.shape[1]);
        assert_eq!(tx.len(), i, "matvec dim mismatch");
        let data = tw
            .data
            .chunks(i)
            .map(|row| row.iter().zip(&tx.data).map(|(a, b)| a * b).sum())
            .collect();
        self.push(Tensor::new(vec![o], data), Op::MatVec { w, x })
    }

    /// Contiguous slice `[start, start+len)` of a vector.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let t = self.value(x);
        assert_eq!(t.shape.len(), 1);
        let data = t.data[start..start + len].to_vec();
        self.push(Tensor::new(vec![len], data), Op::Slice { x, start })
    }

    /// Mean per-pixel softmax cross-entropy of `[C,H,W]` logits.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: &[u8]) -> Var {
        let probs = softmax_channels(self.value(logits));
        let t = self.value(logits);
        let (c, hw) = (t.shape[0], t.shape[1] * t.shape[2]);
        assert_eq!(target.len(), hw, "target size mismatch");
        let mut loss = 0.0;
        for (p, &cls) in target.iter().enumerate() {
            let cls = cls as usize;
            assert!(cls < c, "target class out of range");
            loss -= probs[cls * hw + p].max(1e-300).ln();
        }
        loss /= hw as f64;
        self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCe { logits, target: target.to_vec(), probs },
        )
    }

    /// Binary cross-entropy of a scalar logit against a target in [0,1].
    pub fn bce_with_logits(&mut self, x: Var, target: f64) -> Var {
        let z = self.value(x).data[0];
        let loss = z.max(0.0) - z * target + (-z.abs()).exp().ln_1p();
        self.push(Tensor::scalar(loss), Op::BceLogits { x, target })
    }

    /// Accumulate d(loss)/d(param) into `grads`, scaled by `scale`.
    pub fn backward(&self, loss: Var, scale: f64, grads: &mut [Tensor]) {
        assert_eq!(self.value(loss).len(), 1, "backward from non-scalar");
        let mut g: Vec<Option<Vec<f64>>> = Vec::with_capacity(loss.0 + 1);
        g.resize_with(loss.0 + 1, || None);
        g[loss.0] = Some(vec![scale]);
        for id in (0..=loss.0).rev() {
            let Some(dy) = g[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {
                    if let Value::Param(pi) = node.value {
                        for (acc, d) in grads[pi].data.iter_mut().zip(&dy) {
                            *acc += d;
                        }
                    }
                }
                Op::Conv2d { x, w, b, k, cols } => {
                    let xs = &self.value(*x).shape;
                    let (c, h, wd) = (xs[0], xs[1], xs[2]);
                    let o = self.value(*w).shape[0];
                    let hw = h * wd;
                    let ckk = c * k * k;
                    let src: &[f64] = if *k == 1 { &self.value(*x).data } else { cols };
                    let mut dw = vec![0.0; o * ckk];
                    gemm(o, hw, ckk, &dy, false, src, true, 0.0, &mut dw);
                    add_into(&mut g, *w, &dw);
                    let db: Vec<f64> = dy.chunks(hw).map(|r| r.iter().sum()).collect();
                    add_into(&mut g, *b, &db);
                    if self.needs_grad(*x) {
                        let mut dcols = vec![0.0; ckk * hw];
                        gemm(ckk, o, hw, &self.value(*w).data, true, &dy, false, 0.0, &mut dcols);
                        let dx = if *k == 1 { dcols } else { col2im(&dcols, c, h, wd, *k) };
                        add_into(&mut g, *x, &dx);
                    }
                }
                Op::MaxPool2 { x, argmax } => {
                    let mut dx = vec![0.0; self.value(*x).len()];
                    for (o, &src) in argmax.iter().enumerate() {
                        dx[src] += dy[o];
                    }
                    add_into(&mut g, *x, &dx);
                }
                Op::Upsample2 { x } => {
                    let s = &self.value(*x).shape;
                    let (c, h, w) = (s[0], s[1], s[2]);
                    let (oh, ow) = (2 * h, 2 * w);
                    let mut dx = vec![0.0; c * h * w];
                    for ch in 0..c {
                        for y in 0..oh {
                            for xx in 0..ow {
                                dx[(ch * h + y / 2) * w + xx / 2] += dy[(ch * oh + y) * ow + xx];
                            }
                        }
                    }
                    add_into(&mut g, *x, &dx);
                }
                Op::Concat { a, b } => {
                    let na = self.value(*a).len();
                    add_into(&mut g, *a, &dy[..na]);
                    add_into(&mut g, *b, &dy[na..]);
                }
                Op::Add { a, b } => {
                    add_into(&mut g, *a, &dy);
                    add_into(&mut g, *b, &dy);
                }
                Op::Mul { a, b } => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let da: Vec<f64> = dy.iter().zip(&tb.data).map(|(d, v)| d * v).collect();
                    let db: Vec<f64> = dy.iter().zip(&ta.data).map(|(d, v)| d * v).collect();
                    add_into(&mut g, *a, &da);
                    add_into(&mut g, *b, &db);
                }
                Op::Relu { x } => {
                    let tx = self.value(*x);
                    let dx: Vec<f64> = dy
                        .iter()
                        .zip(&tx.data)
                        .map(|(d, &v)| if v > 0.0 { *d } else { 0.0 })
                        .collect();
                    add_into(&mut g, *x, &dx);
                }
                Op::Sigmoid { x } => {
                    let y = self.value(Var(id));
                    let dx: Vec<f64> = dy.iter().zip(&y.data).map(|(d, s)| d * s * (1.0 - s)).collect();
                    add_into(&mut g, *x, &dx);
                }
                Op::Tanh { x } => {
                    let y = self.value(Var(id));
                    let dx: Vec<f64> = dy.iter().zip(&y.data).map(|(d, t)| d * (1.0 - t * t)).collect();
                    add_into(&mut g, *x, &dx);
                }
                Op::MatVec { w, x } => {
                    let (tw, tx) = (self.value(*w), self.value(*x));
                    let i = tw.shape[1];
                    let mut dw = vec![0.0; tw.len()];
                    for (r, d) in dy.iter().enumerate() {
                        for (c, xv) in tx.data.iter().enumerate() {
                            dw[r * i + c] = d * xv;
                        }
                    }
                    add_into(&mut g, *w, &dw);
                    if self.needs_grad(*x) {
                        let mut dx = vec![0.0; i];
                        for (r, d) in dy.iter().enumerate() {
                            for (c, acc) in dx.iter_mut().enumerate() {
                                *acc += tw.data[r * i + c] * d;
                            }
                        }
                        add_into(&mut g, *x, &dx);
                    }
                }
                Op::Slice { x, start } => {
                    let mut dx = vec![0.0; self.value(*x).len()];
                    dx[*start..*start + dy.len()].copy_from_slice(&dy);
                    add_into(&mut g, *x, &dx);
                }
                Op::SoftmaxCe { logits, target, probs } => {
                    let hw = target.len();
                    let s = dy[0] / hw as f64;
                    let mut dx: Vec<f64> = probs.iter().map(|p| p * s).collect();
                    for (p, &cls) in target.iter().enumerate() {
                        dx[cls as usize * hw + p] -= s;
                    }
                    add_into(&mut g, *logits, &dx);
                }
                Op::BceLogits { x, target } => {
                    let z = self.value(*x).data[0];
                    add_into(&mut g, *x, &[dy[0] * (sigmoid(z) - target)]);
                }
            }
        }
    }

    fn needs_grad(&self, v: Var) -> bool {
        !matches!(
            (&self.nodes[v.0].op, &self.nodes[v.0].value),
            (Op::Leaf, Value::Owned(_))
        )
    }
}

fn add_into(g: &mut [Option<Vec<f64>>], v: Var, d: &[f64]) {
    match &mut g[v.0] {
        Some(acc) => {
            for (a, x) in acc.iter_mut().zip(d) {
                *a += x;
            }
        }
        slot @ None => *slot = Some(d.to_vec()),
    }
}

/// Per-pixel softmax over the channel axis of a `[C,H,W]` tensor.
pub fn softmax_channels(t: &Tensor) -> Vec<f64> {
    let (c, hw) = (t.shape[0], t.shape[1] * t.shape[2]);
    let mut out = vec![0.0; c * hw];
    for p in 0..hw {
        let mut m = f64::NEG_INFINITY;
        for ch in 0..c {
            m = m.max(t.data[ch * hw + p]);
        }
        let mut s = 0.0;
        for ch in 0..c {
            let e = (t.data[ch * hw + p] - m).exp();
            out[ch * hw + p] = e;
            s += e;
        }
        for ch in 0..c {
            out[ch * hw + p] /= s;
        }
    }
    out
}

fn im2col(x: &[f64], c: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let pad = (k / 2) as isize;
    let hw = h * w;
    let mut cols = vec![0.0; c * k * k * hw];
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ch * k + ky) * k + kx) * hw;
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize) as usize;
                    let src = ch * hw + sy as usize * w;
                    let dst = row + y * w;
                    for xx in x0..x1 {
                        cols[dst + xx] = x[src + (xx as isize + dx) as usize];
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], c: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let pad = (k / 2) as isize;
    let hw = h * w;
    let mut x = vec![0.0; c * hw];
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ch * k + ky) * k + kx) * hw;
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize) as usize;
                    let dst = ch * hw + sy as usize * w;
                    let src = row + y * w;
                    for xx in x0..x1 {
                        x[dst + (xx as isize + dx) as usize] += cols[src + xx];
                    }
                }
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor) -> Vec<f64> {
        let (c, h, wd) = (x.shape[0], x.shape[1], x.shape[2]);
        let (o, k) = (w.shape[0], w.shape[2]);
        let pad = (k / 2) as isize;
        let mut out = vec![0.0; o * h * wd];
        for oi in 0..o {
            for y in 0..h as isize {
                for xx in 0..wd as isize {
                    let mut s = b.data[oi];
                    for ci in 0..c {
                        for ky in 0..k as isize {
                            for kx in 0..k as isize {
                                let sy = y + ky - pad;
                                let sx = xx + kx - pad;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= wd as isize {
                                    continue;
                                }
                                let wv = w.data[((oi * c + ci) * k + ky as usize) * k + kx as usize];
                                s += wv * x.data[(ci * h + sy as usize) * wd + sx as usize];
                            }
                        }
                    }
                    out[(oi * h + y as usize) * wd + xx as usize] = s;
                }
            }
        }
        out
    }

    fn ramp(shape: &[usize], a: f64) -> Tensor {
        let n = shape.iter().product::<usize>();
        Tensor::new(shape.to_vec(), (0..n).map(|i| ((i as f64) * a).sin()).collect())
    }

    #[test]
    fn conv_matches_direct_sum() {
        for k in [1, 3] {
            let mut ps = ParamSet::new();
            let w = ps.push("w", ramp(&[3, 2, k, k], 0.7));
            let b = ps.push("b", ramp(&[3], 1.3));
            let x = ramp(&[2, 5, 4], 0.37);
            let expect = naive_conv(&x, ps.get(w), ps.get(b));
            let mut g = Graph::new(&ps);
            let xv = g.input(x);
            let (wv, bv) = (g.param(w), g.param(b));
            let y = g.conv2d(xv, wv, bv);
            for (a, e) in g.value(y).data.iter().zip(&expect) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_sums_to_one() {
        let t = ramp(&[4, 3, 3], 2.1);
        let p = softmax_channels(&t);
        for px in 0..9 {
            let s: f64 = (0..4).map(|c| p[c * 9 + px]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn checksum_tracks_values() {
        let mut a = ParamSet::new();
        a.push("w", Tensor::scalar(1.0));
        let mut b = a.clone();
        assert_eq!(a.checksum(), b.checksum());
        b.get_mut(ParamId(0)).data[0] = 1.0 + 1e-15;
        assert_ne!(a.checksum(), b.checksum());
    }
}

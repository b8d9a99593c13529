//! Reverse-mode automatic differentiation over dense f64 arrays.
//!
//! A [`Graph`] is an append-only tape: every operation validates shapes,
//! computes its value eagerly, and records parents. [`Graph::backward`] walks
//! the tape in reverse creation order (a topological order by construction)
//! and accumulates gradients into every node that transitively depends on a
//! trainable leaf. [`Tensor`] is a copyable handle into one graph.
//!
//! There is no broadcasting beyond scalar-tensor ops; row/channel bias adds
//! are explicit operations.

pub mod gradcheck;

use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{Error, Result};

pub use gradcheck::{grad_check, GradEval};

/// Handle to a node of one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tensor(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Neg(Tensor),
    AddScalar(Tensor),
    MulScalar(Tensor, f64),
    Log(Tensor),
    Exp(Tensor),
    Sigmoid(Tensor),
    ClampMin(Tensor, f64),
    Relu(Tensor),
    LeakyRelu(Tensor, f64),
    /// Softmax over the last axis.
    Softmax(Tensor),
    /// Log-softmax over the last axis.
    LogSoftmax(Tensor),
    Matmul(Tensor, Tensor),
    /// `x[N,G] + b[G]` for every row.
    BiasRows(Tensor, Tensor),
    /// `x[C,H,W] + b[C]` for every plane.
    BiasChannels(Tensor, Tensor),
    /// Stride-1 same-padding convolution, odd square kernels.
    Conv2d(Tensor, Tensor),
    MaxPool2x2 { x: Tensor, argmax: Vec<u32> },
    UpsampleNearest2(Tensor),
    InstanceNorm2d { x: Tensor, gamma: Tensor, beta: Tensor, mean: Vec<f64>, istd: Vec<f64> },
    Mean(Tensor),
    Sum(Tensor),
    GatherRows { x: Tensor, idx: Vec<usize> },
    ScatterRows { x: Tensor, idx: Vec<usize> },
    /// Row `g` of the output is the mean of `x`'s rows in `groups[g]`
    /// (zeros when the group is empty).
    GroupMeanRows { x: Tensor, groups: Vec<Vec<usize>> },
    Concat { parts: Vec<Tensor>, axis: usize },
    Slice { x: Tensor, axis: usize, start: usize },
    Reshape(Tensor),
    /// `[C,H,W] -> [H*W, C]` so per-class ops can treat pixels as rows.
    ChwToRows(Tensor),
    Detach(Tensor),
}

struct Node {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Test hook: flips the sign of the ReLU backward rule in graphs created
/// while enabled. Used by the verification CLI to prove the gradient suite
/// catches an injected defect.
#[doc(hidden)]
pub static FAULT_RELU_BACKWARD: AtomicBool = AtomicBool::new(false);

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    fault_relu: bool,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), fault_relu: FAULT_RELU_BACKWARD.load(Ordering::Relaxed) }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, t: Tensor) -> &[usize] {
        &self.nodes[t.0].shape
    }

    pub fn values(&self, t: Tensor) -> &[f64] {
        &self.nodes[t.0].values
    }

    /// Value of a single-element tensor.
    pub fn scalar_value(&self, t: Tensor) -> f64 {
        debug_assert_eq!(self.nodes[t.0].values.len(), 1);
        self.nodes[t.0].values[0]
    }

    /// Gradient buffer of a node (empty slice before backward or for nodes
    /// that do not require gradients).
    pub fn grad(&self, t: Tensor) -> &[f64] {
        &self.nodes[t.0].grad
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, op: Op, needs_grad: bool) -> Tensor {
        debug_assert_eq!(numel(&shape), values.len());
        self.nodes.push(Node { shape, values, grad: Vec::new(), op, needs_grad });
        Tensor(self.nodes.len() - 1)
    }

    fn needs(&self, t: Tensor) -> bool {
        self.nodes[t.0].needs_grad
    }

    // ── leaves ──────────────────────────────────────────────────────────

    /// Non-trainable input.
    pub fn constant(&mut self, values: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != values.len() {
            return Err(Error::ShapeError(format!(
                "constant: {} values for shape {shape:?}",
                values.len()
            )));
        }
        Ok(self.push(shape.to_vec(), values, Op::Leaf, false))
    }

    pub fn scalar(&mut self, v: f64) -> Tensor {
        self.push(vec![1], vec![v], Op::Leaf, false)
    }

    /// Trainable leaf; receives a gradient during backward.
    pub fn leaf(&mut self, values: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != values.len() {
            return Err(Error::ShapeError(format!(
                "leaf: {} values for shape {shape:?}",
                values.len()
            )));
        }
        Ok(self.push(shape.to_vec(), values, Op::Leaf, true))
    }

    // ── elementwise ─────────────────────────────────────────────────────

    fn same_shape(&self, a: Tensor, b: Tensor, what: &str) -> Result<()> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(Error::ShapeError(format!(
                "{what}: {:?} vs {:?}",
                self.nodes[a.0].shape, self.nodes[b.0].shape
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.same_shape(a, b, "add")?;
        let v = self.nodes[a.0].values.iter().zip(&self.nodes[b.0].values).map(|(x, y)| x + y).collect();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(self.nodes[a.0].shape.clone(), v, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.same_shape(a, b, "sub")?;
        let v = self.nodes[a.0].values.iter().zip(&self.nodes[b.0].values).map(|(x, y)| x - y).collect();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(self.nodes[a.0].shape.clone(), v, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.same_shape(a, b, "mul")?;
        let v = self.nodes[a.0].values.iter().zip(&self.nodes[b.0].values).map(|(x, y)| x * y).collect();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(self.nodes[a.0].shape.clone(), v, Op::Mul(a, b), ng))
    }

    pub fn neg(&mut self, a: Tensor) -> Tensor {
        let v = self.nodes[a.0].values.iter().map(|x| -x).collect();
        let ng = self.needs(a);
        self.push(self.nodes[a.0].shape.clone(), v, Op::Neg(a), ng)
    }

    pub fn add_scalar(&mut self, a: Tensor, s: f64) -> Tensor {
        let v = self.nodes[a.0].values.iter().map(|x| x + s).collect();
        let ng = self.needs(a);
        self.push(self.nodes[a.0].shape.clone(), v, Op::AddScalar(a), ng)
    }

    pub fn mul_scalar(&mut self, a: Tensor, s: f64) -> Tensor {
        let v = self.nodes[a.0].values.iter().map(|x| x * s).collect();
        let ng = self.needs(a);
        self.push(self.nodes[a.0].shape.clone(), v, Op::MulScalar(a, s), ng)
    }

    pub fn log(&mut self, a: Tensor) -> Tensor {
        let v = self.nodes[a.0].values.iter().map(|x| x.ln()).collect();
        let ng = self.needs(a);
        self.push(self.nodes[a.0].shape.clone(), v, Op::Log(a), ng)
    }

    pub fn exp(&mut self, a: Tensor) -> Tensor {
        let v = self.nodes[a.0].values.iter().map(|x| x.exp()).collect();
        let ng = self.needs(a);
        self.push(self.nodes[a.0].shape.clone(), v, Op::Exp(a), ng)
    }

    pub fn sigmoid(&mut self, a: Tensor) -> Tensor {
        let v = self.nodes[a.0].values.iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
        let ng = self.needs(a);
        self.push(self.nodes[a.0].shape.clone(), v, Op::Sigmoid(a), ng)
    }

    /// Elementwise `max(x, c)`; the gradient passes where `x >= c`.
    pub fn clamp_min(&mut self, a: Tensor, c: f64) -> Tensor {
        let v = self.nodes[a.0].values.iter().map(|x| x.max(c)).collect();
        let ng = self.needs(a);
        self.push(self.nodes[a.0].shape.clone(), v, Op::ClampMin(a, c), ng)
    }

    pub fn relu(&mut self, a: Tensor) -> Tensor {
        let v = self.nodes[a.0].values.iter().map(|x| x.max(0.0)).collect();
        let ng = self.needs(a);
        self.push(self.nodes[a.0].shape.clone(), v, Op::Relu(a), ng)
    }

    pub fn leaky_relu(&mut self, a: Tensor, alpha: f64) -> Tensor {
        let v = self.nodes[a.0].values.iter().map(|&x| if x > 0.0 { x } else { alpha * x }).collect();
        let ng = self.needs(a);
        self.push(self.nodes[a.0].shape.clone(), v, Op::LeakyRelu(a, alpha), ng)
    }

    // ── rows (last axis) ────────────────────────────────────────────────

    fn last_axis(&self, a: Tensor, what: &str) -> Result<(usize, usize)> {
        let shape = &self.nodes[a.0].shape;
        let Some(&cols) = shape.last() else {
            return Err(Error::ShapeError(format!("{what}: zero-rank tensor")));
        };
        if cols == 0 {
            return Err(Error::ShapeError(format!("{what}: empty last axis")));
        }
        Ok((numel(shape) / cols, cols))
    }

    /// Softmax over the last axis, computed with max subtraction.
    pub fn softmax(&mut self, a: Tensor) -> Result<Tensor> {
        let (rows, cols) = self.last_axis(a, "softmax")?;
        let x = &self.nodes[a.0].values;
        let mut v = vec![0.0; x.len()];
        for r in 0..rows {
            let row = &x[r * cols..(r + 1) * cols];
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (o, &xi) in v[r * cols..(r + 1) * cols].iter_mut().zip(row) {
                *o = (xi - m).exp();
                z += *o;
            }
            for o in &mut v[r * cols..(r + 1) * cols] {
                *o /= z;
            }
        }
        let ng = self.needs(a);
        Ok(self.push(self.nodes[a.0].shape.clone(), v, Op::Softmax(a), ng))
    }

    /// `log(softmax)` over the last axis, in one numerically stable op.
    pub fn log_softmax(&mut self, a: Tensor) -> Result<Tensor> {
        let (rows, cols) = self.last_axis(a, "log_softmax")?;
        let x = &self.nodes[a.0].values;
        let mut v = vec![0.0; x.len()];
        for r in 0..rows {
            let row = &x[r * cols..(r + 1) * cols];
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|&xi| (xi - m).exp()).sum::<f64>().ln() + m;
            for (o, &xi) in v[r * cols..(r + 1) * cols].iter_mut().zip(row) {
                *o = xi - lse;
            }
        }
        let ng = self.needs(a);
        Ok(self.push(self.nodes[a.0].shape.clone(), v, Op::LogSoftmax(a), ng))
    }

    // ── linear algebra ──────────────────────────────────────────────────

    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeError(format!("matmul: {sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (va, vb) = (&self.nodes[a.0].values, &self.nodes[b.0].values);
        let mut v = vec![0.0; m * n];
        for i in 0..m {
            for kk in 0..k {
                let aik = va[i * k + kk];
                if aik == 0.0 {
                    continue;
                }
                let brow = &vb[kk * n..(kk + 1) * n];
                let out = &mut v[i * n..(i + 1) * n];
                for (o, &bv) in out.iter_mut().zip(brow) {
                    *o += aik * bv;
                }
            }
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(vec![m, n], v, Op::Matmul(a, b), ng))
    }

    pub fn bias_rows(&mut self, x: Tensor, b: Tensor) -> Result<Tensor> {
        let (sx, sb) = (&self.nodes[x.0].shape, &self.nodes[b.0].shape);
        if sx.len() != 2 || sb.len() != 1 || sx[1] != sb[0] {
            return Err(Error::ShapeError(format!("bias_rows: {sx:?} + {sb:?}")));
        }
        let (n, g) = (sx[0], sx[1]);
        let (vx, vb) = (&self.nodes[x.0].values, &self.nodes[b.0].values);
        let mut v = vec![0.0; n * g];
        for r in 0..n {
            for c in 0..g {
                v[r * g + c] = vx[r * g + c] + vb[c];
            }
        }
        let ng = self.needs(x) || self.needs(b);
        Ok(self.push(vec![n, g], v, Op::BiasRows(x, b), ng))
    }

    pub fn bias_channels(&mut self, x: Tensor, b: Tensor) -> Result<Tensor> {
        let (sx, sb) = (&self.nodes[x.0].shape, &self.nodes[b.0].shape);
        if sx.len() != 3 || sb.len() != 1 || sx[0] != sb[0] {
            return Err(Error::ShapeError(format!("bias_channels: {sx:?} + {sb:?}")));
        }
        let (c, plane) = (sx[0], sx[1] * sx[2]);
        let (vx, vb) = (&self.nodes[x.0].values, &self.nodes[b.0].values);
        let mut v = vec![0.0; c * plane];
        for ch in 0..c {
            for i in 0..plane {
                v[ch * plane + i] = vx[ch * plane + i] + vb[ch];
            }
        }
        let ng = self.needs(x) || self.needs(b);
        Ok(self.push(sx.clone(), v, Op::BiasChannels(x, b), ng))
    }

    // ── 2D image ops ────────────────────────────────────────────────────

    /// Stride-1 same-padding convolution: `x[Cin,H,W] * w[Cout,Cin,k,k]`,
    /// `k` odd.
    pub fn conv2d(&mut self, x: Tensor, w: Tensor) -> Result<Tensor> {
        let (sx, sw) = (&self.nodes[x.0].shape, &self.nodes[w.0].shape);
        if sx.len() != 3 || sw.len() != 4 || sx[0] != sw[1] || sw[2] != sw[3] || sw[2] % 2 == 0 {
            return Err(Error::ShapeError(format!("conv2d: x {sx:?}, w {sw:?}")));
        }
        let (cin, h, wd) = (sx[0], sx[1], sx[2]);
        let (cout, k) = (sw[0], sw[2]);
        let pad = k / 2;
        let (vx, vw) = (&self.nodes[x.0].values, &self.nodes[w.0].values);
        let mut v = vec![0.0; cout * h * wd];
        for co in 0..cout {
            let out_plane = &mut v[co * h * wd..(co + 1) * h * wd];
            for ci in 0..cin {
                let in_plane = &vx[ci * h * wd..(ci + 1) * h * wd];
                for kh in 0..k {
                    for kw in 0..k {
                        let wv = vw[((co * cin + ci) * k + kh) * k + kw];
                        if wv == 0.0 {
                            continue;
                        }
                        let dh = kh as isize - pad as isize;
                        let dw = kw as isize - pad as isize;
                        let (h0, h1) = shifted_range(h, dh);
                        let (w0, w1) = shifted_range(wd, dw);
                        for oh in h0..h1 {
                            let ih = (oh as isize + dh) as usize;
                            let iw0 = w0.wrapping_add_signed(dw);
                            let src = &in_plane[ih * wd + iw0..ih * wd + iw0 + (w1 - w0)];
                            let dst = &mut out_plane[oh * wd + w0..oh * wd + w1];
                            for (o, s) in dst.iter_mut().zip(src) {
                                *o += wv * s;
                            }
                        }
                    }
                }
            }
        }
        let ng = self.needs(x) || self.needs(w);
        Ok(self.push(vec![cout, h, wd], v, Op::Conv2d(x, w), ng))
    }

    /// 2x2 max pooling, stride 2; ties pick the first element in scan order.
    pub fn max_pool2x2(&mut self, x: Tensor) -> Result<Tensor> {
        let sx = &self.nodes[x.0].shape;
        if sx.len() != 3 || sx[1] % 2 != 0 || sx[2] % 2 != 0 {
            return Err(Error::ShapeError(format!("max_pool2x2: {sx:?}")));
        }
        let (c, h, w) = (sx[0], sx[1], sx[2]);
        let (oh, ow) = (h / 2, w / 2);
        let vx = &self.nodes[x.0].values;
        let mut v = vec![0.0; c * oh * ow];
        let mut argmax = vec![0u32; c * oh * ow];
        for ch in 0..c {
            for r in 0..oh {
                for cc in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = 0usize;
                    for dr in 0..2 {
                        for dc in 0..2 {
                            let i = ch * h * w + (2 * r + dr) * w + 2 * cc + dc;
                            if vx[i] > best {
                                best = vx[i];
                                best_i = i;
                            }
                        }
                    }
                    let o = ch * oh * ow + r * ow + cc;
                    v[o] = best;
                    argmax[o] = best_i as u32;
                }
            }
        }
        let ng = self.needs(x);
        Ok(self.push(vec![c, oh, ow], v, Op::MaxPool2x2 { x, argmax }, ng))
    }

    /// Nearest-neighbor 2x upsampling.
    pub fn upsample_nearest2(&mut self, x: Tensor) -> Result<Tensor> {
        let sx = &self.nodes[x.0].shape;
        if sx.len() != 3 {
            return Err(Error::ShapeError(format!("upsample_nearest2: {sx:?}")));
        }
        let (c, h, w) = (sx[0], sx[1], sx[2]);
        let (oh, ow) = (2 * h, 2 * w);
        let vx = &self.nodes[x.0].values;
        let mut v = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for r in 0..oh {
                for cc in 0..ow {
                    v[ch * oh * ow + r * ow + cc] = vx[ch * h * w + (r / 2) * w + cc / 2];
                }
            }
        }
        let ng = self.needs(x);
        Ok(self.push(vec![c, oh, ow], v, Op::UpsampleNearest2(x), ng))
    }

    /// Instance normalization over each channel plane with learnable scale
    /// and shift: `y = gamma * (x - mean) / sqrt(var + eps) + beta`,
    /// `eps = 1e-5`.
    pub fn instance_norm2d(&mut self, x: Tensor, gamma: Tensor, beta: Tensor) -> Result<Tensor> {
        const EPS: f64 = 1e-5;
        let (sx, sg, sb) = (&self.nodes[x.0].shape, &self.nodes[gamma.0].shape, &self.nodes[beta.0].shape);
        if sx.len() != 3 || sg.as_slice() != [sx[0]] || sb.as_slice() != [sx[0]] {
            return Err(Error::ShapeError(format!(
                "instance_norm2d: x {sx:?}, gamma {sg:?}, beta {sb:?}"
            )));
        }
        let (c, plane) = (sx[0], sx[1] * sx[2]);
        let vx = &self.nodes[x.0].values;
        let (vg, vb) = (&self.nodes[gamma.0].values, &self.nodes[beta.0].values);
        let mut v = vec![0.0; c * plane];
        let mut means = vec![0.0; c];
        let mut istds = vec![0.0; c];
        for ch in 0..c {
            let xs = &vx[ch * plane..(ch + 1) * plane];
            let mean = xs.iter().sum::<f64>() / plane as f64;
            let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / plane as f64;
            let istd = 1.0 / (var + EPS).sqrt();
            means[ch] = mean;
            istds[ch] = istd;
            for (o, &xi) in v[ch * plane..(ch + 1) * plane].iter_mut().zip(xs) {
                *o = vg[ch] * (xi - mean) * istd + vb[ch];
            }
        }
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(sx.clone(), v, Op::InstanceNorm2d { x, gamma, beta, mean: means, istd: istds }, ng))
    }

    // ── reductions ──────────────────────────────────────────────────────

    pub fn mean(&mut self, a: Tensor) -> Tensor {
        let n = self.nodes[a.0].values.len().max(1);
        let v = self.nodes[a.0].values.iter().sum::<f64>() / n as f64;
        let ng = self.needs(a);
        self.push(vec![1], vec![v], Op::Mean(a), ng)
    }

    pub fn sum(&mut self, a: Tensor) -> Tensor {
        let v = self.nodes[a.0].values.iter().sum::<f64>();
        let ng = self.needs(a);
        self.push(vec![1], vec![v], Op::Sum(a), ng)
    }

    // ── gather / scatter / grouping ─────────────────────────────────────

    /// Output row `m` is row `idx[m]` of `x[N,F]`.
    pub fn gather_rows(&mut self, x: Tensor, idx: &[usize]) -> Result<Tensor> {
        let sx = &self.nodes[x.0].shape;
        if sx.len() != 2 {
            return Err(Error::ShapeError(format!("gather_rows: {sx:?}")));
        }
        let (n, f) = (sx[0], sx[1]);
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::ShapeError(format!("gather_rows: index {bad} >= {n}")));
        }
        let vx = &self.nodes[x.0].values;
        let mut v = vec![0.0; idx.len() * f];
        for (m, &i) in idx.iter().enumerate() {
            v[m * f..(m + 1) * f].copy_from_slice(&vx[i * f..(i + 1) * f]);
        }
        let ng = self.needs(x);
        Ok(self.push(vec![idx.len(), f], v, Op::GatherRows { x, idx: idx.to_vec() }, ng))
    }

    /// Scatter-add rows of `x[M,F]` into an `[n_rows,F]` output at `idx`.
    pub fn scatter_rows(&mut self, x: Tensor, idx: &[usize], n_rows: usize) -> Result<Tensor> {
        let sx = &self.nodes[x.0].shape;
        if sx.len() != 2 || sx[0] != idx.len() {
            return Err(Error::ShapeError(format!(
                "scatter_rows: {sx:?} with {} indices",
                idx.len()
            )));
        }
        let f = sx[1];
        if let Some(&bad) = idx.iter().find(|&&i| i >= n_rows) {
            return Err(Error::ShapeError(format!("scatter_rows: index {bad} >= {n_rows}")));
        }
        let vx = &self.nodes[x.0].values;
        let mut v = vec![0.0; n_rows * f];
        for (m, &i) in idx.iter().enumerate() {
            for c in 0..f {
                v[i * f + c] += vx[m * f + c];
            }
        }
        let ng = self.needs(x);
        Ok(self.push(vec![n_rows, f], v, Op::ScatterRows { x, idx: idx.to_vec() }, ng))
    }

    /// Row `g` of the output is the mean of `x`'s rows listed in `groups[g]`;
    /// empty groups produce zero rows.
    pub fn group_mean_rows(&mut self, x: Tensor, groups: &[Vec<usize>]) -> Result<Tensor> {
        let sx = &self.nodes[x.0].shape;
        if sx.len() != 2 {
            return Err(Error::ShapeError(format!("group_mean_rows: {sx:?}")));
        }
        let (n, f) = (sx[0], sx[1]);
        for grp in groups {
            if let Some(&bad) = grp.iter().find(|&&i| i >= n) {
                return Err(Error::ShapeError(format!("group_mean_rows: index {bad} >= {n}")));
            }
        }
        let vx = &self.nodes[x.0].values;
        let mut v = vec![0.0; groups.len() * f];
        for (gi, grp) in groups.iter().enumerate() {
            if grp.is_empty() {
                continue;
            }
            let scale = 1.0 / grp.len() as f64;
            for &i in grp {
                for c in 0..f {
                    v[gi * f + c] += vx[i * f + c] * scale;
                }
            }
        }
        let ng = self.needs(x);
        Ok(self.push(vec![groups.len(), f], v, Op::GroupMeanRows { x, groups: groups.to_vec() }, ng))
    }

    // ── structure ───────────────────────────────────────────────────────

    pub fn concat(&mut self, parts: &[Tensor], axis: usize) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::ShapeError("concat: no inputs".into()));
        }
        let base = self.nodes[parts[0].0].shape.clone();
        if axis >= base.len() {
            return Err(Error::ShapeError(format!("concat: axis {axis} of {base:?}")));
        }
        let mut axis_total = 0;
        for p in parts {
            let s = &self.nodes[p.0].shape;
            if s.len() != base.len() || s.iter().enumerate().any(|(i, &d)| i != axis && d != base[i]) {
                return Err(Error::ShapeError(format!("concat: {s:?} vs {base:?} on axis {axis}")));
            }
            axis_total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = axis_total;
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut v = vec![0.0; numel(&shape)];
        let row_out = axis_total * inner;
        let mut offset = 0;
        for p in parts {
            let d = self.nodes[p.0].shape[axis];
            let vx = &self.nodes[p.0].values;
            for o in 0..outer {
                let dst = o * row_out + offset * inner;
                let src = o * d * inner;
                v[dst..dst + d * inner].copy_from_slice(&vx[src..src + d * inner]);
            }
            offset += d;
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(shape, v, Op::Concat { parts: parts.to_vec(), axis }, ng))
    }

    pub fn slice(&mut self, x: Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        let sx = self.nodes[x.0].shape.clone();
        if axis >= sx.len() || start + len > sx[axis] || len == 0 {
            return Err(Error::ShapeError(format!(
                "slice: [{start}, {start}+{len}) on axis {axis} of {sx:?}"
            )));
        }
        let outer: usize = sx[..axis].iter().product();
        let inner: usize = sx[axis + 1..].iter().product();
        let mut shape = sx.clone();
        shape[axis] = len;
        let vx = &self.nodes[x.0].values;
        let mut v = vec![0.0; numel(&shape)];
        for o in 0..outer {
            let src = (o * sx[axis] + start) * inner;
            let dst = o * len * inner;
            v[dst..dst + len * inner].copy_from_slice(&vx[src..src + len * inner]);
        }
        let ng = self.needs(x);
        Ok(self.push(shape, v, Op::Slice { x, axis, start }, ng))
    }

    /// Reinterpret the value buffer under a new shape of equal size.
    pub fn reshape(&mut self, x: Tensor, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.nodes[x.0].values.len() {
            return Err(Error::ShapeError(format!(
                "reshape: {:?} -> {shape:?}",
                self.nodes[x.0].shape
            )));
        }
        let v = self.nodes[x.0].values.clone();
        let ng = self.needs(x);
        Ok(self.push(shape.to_vec(), v, Op::Reshape(x), ng))
    }

    /// `[C,H,W] -> [H*W, C]`: pixels become rows, channels become columns.
    pub fn chw_to_rows(&mut self, x: Tensor) -> Result<Tensor> {
        let sx = &self.nodes[x.0].shape;
        if sx.len() != 3 {
            return Err(Error::ShapeError(format!("chw_to_rows: {sx:?}")));
        }
        let (c, plane) = (sx[0], sx[1] * sx[2]);
        let vx = &self.nodes[x.0].values;
        let mut v = vec![0.0; c * plane];
        for ch in 0..c {
            for px in 0..plane {
                v[px * c + ch] = vx[ch * plane + px];
            }
        }
        let ng = self.needs(x);
        Ok(self.push(vec![plane, c], v, Op::ChwToRows(x), ng))
    }

    /// Same values, but gradients stop here.
    pub fn detach(&mut self, x: Tensor) -> Tensor {
        let v = self.nodes[x.0].values.clone();
        self.push(self.nodes[x.0].shape.clone(), v, Op::Detach(x), false)
    }

    // ── backward ────────────────────────────────────────────────────────

    /// Accumulate `d loss / d node` into every node that transitively
    /// depends on a trainable leaf. `loss` must be scalar.
    pub fn backward(&mut self, loss: Tensor) -> Result<()> {
        if self.nodes[loss.0].values.len() != 1 {
            return Err(Error::ShapeError(format!(
                "backward: loss has shape {:?}, expected a scalar",
                self.nodes[loss.0].shape
            )));
        }
        for node in &mut self.nodes[..=loss.0] {
            if node.needs_grad && node.grad.is_empty() {
                node.grad = vec![0.0; node.values.len()];
            }
        }
        if !self.nodes[loss.0].needs_grad {
            return Ok(()); // nothing trainable below the loss
        }
        self.nodes[loss.0].grad[0] += 1.0;
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].needs_grad {
                continue;
            }
            self.backprop_node(id);
        }
        Ok(())
    }

    fn backprop_node(&mut self, id: usize) {
        // Detach the op and output gradient from the node so parent updates
        // can borrow the tape mutably (parents always precede children).
        let op = self.nodes[id].op.clone();
        let g = std::mem::take(&mut self.nodes[id].grad);
        match &op {
            Op::Leaf | Op::Detach(_) => {}
            Op::Add(a, b) => {
                self.add_grad(*a, |i, _| g[i]);
                self.add_grad(*b, |i, _| g[i]);
            }
            Op::Sub(a, b) => {
                self.add_grad(*a, |i, _| g[i]);
                self.add_grad(*b, |i, _| -g[i]);
            }
            Op::Mul(a, b) => {
                let vb = self.nodes[b.0].values.clone();
                let va = self.nodes[a.0].values.clone();
                self.add_grad(*a, |i, _| g[i] * vb[i]);
                self.add_grad(*b, |i, _| g[i] * va[i]);
            }
            Op::Neg(a) => self.add_grad(*a, |i, _| -g[i]),
            Op::AddScalar(a) => self.add_grad(*a, |i, _| g[i]),
            Op::MulScalar(a, s) => {
                let s = *s;
                self.add_grad(*a, |i, _| g[i] * s);
            }
            Op::Log(a) => self.add_grad(*a, |i, x| g[i] / x),
            Op::Exp(a) => {
                let y = self.nodes[id].values.clone();
                self.add_grad(*a, |i, _| g[i] * y[i]);
            }
            Op::Sigmoid(a) => {
                let y = self.nodes[id].values.clone();
                self.add_grad(*a, |i, _| g[i] * y[i] * (1.0 - y[i]));
            }
            Op::ClampMin(a, c) => {
                let c = *c;
                self.add_grad(*a, |i, x| if x >= c { g[i] } else { 0.0 });
            }
            Op::Relu(a) => {
                let sign = if self.fault_relu { -1.0 } else { 1.0 };
                self.add_grad(*a, |i, x| if x > 0.0 { sign * g[i] } else { 0.0 });
            }
            Op::LeakyRelu(a, alpha) => {
                let alpha = *alpha;
                self.add_grad(*a, |i, x| if x > 0.0 { g[i] } else { alpha * g[i] });
            }
            Op::Softmax(a) => {
                let y = self.nodes[id].values.clone();
                let cols = *self.nodes[id].shape.last().unwrap();
                let rows = y.len() / cols;
                let mut dx = vec![0.0; y.len()];
                for r in 0..rows {
                    let o = r * cols;
                    let dot: f64 = (0..cols).map(|c| g[o + c] * y[o + c]).sum();
                    for c in 0..cols {
                        dx[o + c] = y[o + c] * (g[o + c] - dot);
                    }
                }
                self.add_grad(*a, |i, _| dx[i]);
            }
            Op::LogSoftmax(a) => {
                let y = self.nodes[id].values.clone();
                let cols = *self.nodes[id].shape.last().unwrap();
                let rows = y.len() / cols;
                let mut dx = vec![0.0; y.len()];
                for r in 0..rows {
                    let o = r * cols;
                    let gsum: f64 = g[o..o + cols].iter().sum();
                    for c in 0..cols {
                        dx[o + c] = g[o + c] - y[o + c].exp() * gsum;
                    }
                }
                self.add_grad(*a, |i, _| dx[i]);
            }
            Op::Matmul(a, b) => {
                let (m, k) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                let n = self.nodes[b.0].shape[1];
                if self.needs(*a) {
                    let vb = self.nodes[b.0].values.clone();
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for kk in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += g[i * n + j] * vb[kk * n + j];
                            }
                            da[i * k + kk] = acc;
                        }
                    }
                    self.add_grad(*a, |i, _| da[i]);
                }
                if self.needs(*b) {
                    let va = self.nodes[a.0].values.clone();
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        for kk in 0..k {
                            let aik = va[i * k + kk];
                            if aik == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                db[kk * n + j] += aik * g[i * n + j];
                            }
                        }
                    }
                    self.add_grad(*b, |i, _| db[i]);
                }
            }
            Op::BiasRows(x, b) => {
                let cols = self.nodes[b.0].shape[0];
                self.add_grad(*x, |i, _| g[i]);
                let mut db = vec![0.0; cols];
                for (i, gv) in g.iter().enumerate() {
                    db[i % cols] += gv;
                }
                self.add_grad(*b, |i, _| db[i]);
            }
            Op::BiasChannels(x, b) => {
                let c = self.nodes[b.0].shape[0];
                let plane = g.len() / c;
                self.add_grad(*x, |i, _| g[i]);
                let mut db = vec![0.0; c];
                for ch in 0..c {
                    db[ch] = g[ch * plane..(ch + 1) * plane].iter().sum();
                }
                self.add_grad(*b, |i, _| db[i]);
            }
            Op::Conv2d(x, w) => self.conv2d_backward(*x, *w, &g),
            Op::MaxPool2x2 { x, argmax } => {
                let n = self.nodes[x.0].values.len();
                let mut dx = vec![0.0; n];
                for (o, &src) in argmax.iter().enumerate() {
                    dx[src as usize] += g[o];
                }
                self.add_grad(*x, |i, _| dx[i]);
            }
            Op::UpsampleNearest2(x) => {
                let s = &self.nodes[x.0].shape;
                let (c, h, w) = (s[0], s[1], s[2]);
                let (oh, ow) = (2 * h, 2 * w);
                let mut dx = vec![0.0; c * h * w];
                for ch in 0..c {
                    for r in 0..oh {
                        for cc in 0..ow {
                            dx[ch * h * w + (r / 2) * w + cc / 2] += g[ch * oh * ow + r * ow + cc];
                        }
                    }
                }
                self.add_grad(*x, |i, _| dx[i]);
            }
            Op::InstanceNorm2d { x, gamma, beta, mean, istd } => {
                let s = &self.nodes[x.0].shape;
                let (c, plane) = (s[0], s[1] * s[2]);
                let vx = self.nodes[x.0].values.clone();
                let vg = self.nodes[gamma.0].values.clone();
                let mut dx = vec![0.0; c * plane];
                let mut dg = vec![0.0; c];
                let mut db = vec![0.0; c];
                for ch in 0..c {
                    let xs = &vx[ch * plane..(ch + 1) * plane];
                    let gs = &g[ch * plane..(ch + 1) * plane];
                    let (m, is) = (mean[ch], istd[ch]);
                    let mut gsum = 0.0;
                    let mut gxhat = 0.0;
                    for (gv, &xv) in gs.iter().zip(xs) {
                        gsum += gv;
                        gxhat += gv * (xv - m) * is;
                    }
                    dg[ch] = gxhat;
                    db[ch] = gsum;
                    let n = plane as f64;
                    for i in 0..plane {
                        let xhat = (xs[i] - m) * is;
                        dx[ch * plane + i] = vg[ch] * is * (gs[i] - gsum / n - xhat * gxhat / n);
                    }
                }
                self.add_grad(*x, |i, _| dx[i]);
                self.add_grad(*gamma, |i, _| dg[i]);
                self.add_grad(*beta, |i, _| db[i]);
            }
            Op::Mean(a) => {
                let n = self.nodes[a.0].values.len() as f64;
                let gv = g[0] / n;
                self.add_grad(*a, |_, _| gv);
            }
            Op::Sum(a) => {
                let gv = g[0];
                self.add_grad(*a, |_, _| gv);
            }
            Op::GatherRows { x, idx } => {
                let f = self.nodes[x.0].shape[1];
                let mut dx = vec![0.0; self.nodes[x.0].values.len()];
                for (m, &i) in idx.iter().enumerate() {
                    for c in 0..f {
                        dx[i * f + c] += g[m * f + c];
                    }
                }
                self.add_grad(*x, |i, _| dx[i]);
            }
            Op::ScatterRows { x, idx } => {
                let f = self.nodes[x.0].shape[1];
                let mut dx = vec![0.0; self.nodes[x.0].values.len()];
                for (m, &i) in idx.iter().enumerate() {
                    for c in 0..f {
                        dx[m * f + c] = g[i * f + c];
                    }
                }
                self.add_grad(*x, |i, _| dx[i]);
            }
            Op::GroupMeanRows { x, groups } => {
                let f = self.nodes[x.0].shape[1];
                let mut dx = vec![0.0; self.nodes[x.0].values.len()];
                for (gi, grp) in groups.iter().enumerate() {
                    if grp.is_empty() {
                        continue;
                    }
                    let scale = 1.0 / grp.len() as f64;
                    for &i in grp {
                        for c in 0..f {
                            dx[i * f + c] += g[gi * f + c] * scale;
                        }
                    }
                }
                self.add_grad(*x, |i, _| dx[i]);
            }
            Op::Concat { parts, axis } => {
                let axis = *axis;
                let shape = self.nodes[id].shape.clone();
                let outer: usize = shape[..axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let row_out = shape[axis] * inner;
                let mut offset = 0;
                for p in parts {
                    let d = self.nodes[p.0].shape[axis];
                    if self.needs(*p) {
                        let mut dp = vec![0.0; self.nodes[p.0].values.len()];
                        for o in 0..outer {
                            let src = o * row_out + offset * inner;
                            let dst = o * d * inner;
                            dp[dst..dst + d * inner].copy_from_slice(&g[src..src + d * inner]);
                        }
                        self.add_grad(*p, |i, _| dp[i]);
                    }
                    offset += d;
                }
            }
            Op::Slice { x, axis, start } => {
                let (axis, start) = (*axis, *start);
                let sx = self.nodes[x.0].shape.clone();
                let len = self.nodes[id].shape[axis];
                let outer: usize = sx[..axis].iter().product();
                let inner: usize = sx[axis + 1..].iter().product();
                let mut dx = vec![0.0; self.nodes[x.0].values.len()];
                for o in 0..outer {
                    let dst = (o * sx[axis] + start) * inner;
                    let src = o * len * inner;
                    dx[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
                }
                self.add_grad(*x, |i, _| dx[i]);
            }
            Op::Reshape(x) => self.add_grad(*x, |i, _| g[i]),
            Op::ChwToRows(x) => {
                let s = &self.nodes[x.0].shape;
                let (c, plane) = (s[0], s[1] * s[2]);
                let mut dx = vec![0.0; c * plane];
                for ch in 0..c {
                    for px in 0..plane {
                        dx[ch * plane + px] = g[px * c + ch];
                    }
                }
                self.add_grad(*x, |i, _| dx[i]);
            }
        }
        self.nodes[id].grad = g;
    }

    /// Add `f(i, parent_value_i)` into the parent's gradient, skipping
    /// parents that do not require gradients.
    fn add_grad<F: Fn(usize, f64) -> f64>(&mut self, parent: Tensor, f: F) {
        if !self.nodes[parent.0].needs_grad {
            return;
        }
        let node = &mut self.nodes[parent.0];
        let values = std::mem::take(&mut node.values);
        for (i, gv) in node.grad.iter_mut().enumerate() {
            *gv += f(i, values[i]);
        }
        self.nodes[parent.0].values = values;
    }

    fn conv2d_backward(&mut self, x: Tensor, w: Tensor, g: &[f64]) {
        let (cin, h, wd) = {
            let s = &self.nodes[x.0].shape;
            (s[0], s[1], s[2])
        };
        let (cout, k) = {
            let s = &self.nodes[w.0].shape;
            (s[0], s[2])
        };
        let pad = k / 2;
        if self.needs(x) {
            let vw = self.nodes[w.0].values.clone();
            let mut dx = vec![0.0; cin * h * wd];
            for co in 0..cout {
                let g_plane = &g[co * h * wd..(co + 1) * h * wd];
                for ci in 0..cin {
                    let dx_plane = &mut dx[ci * h * wd..(ci + 1) * h * wd];
                    for kh in 0..k {
                        for kw in 0..k {
                            let wv = vw[((co * cin + ci) * k + kh) * k + kw];
                            if wv == 0.0 {
                                continue;
                            }
                            let dh = kh as isize - pad as isize;
                            let dw = kw as isize - pad as isize;
                            let (h0, h1) = shifted_range(h, dh);
                            let (w0, w1) = shifted_range(wd, dw);
                            for oh in h0..h1 {
                                let ih = (oh as isize + dh) as usize;
                                let iw0 = w0.wrapping_add_signed(dw);
                                for ow in 0..w1 - w0 {
                                    dx_plane[ih * wd + iw0 + ow] += wv * g_plane[oh * wd + w0 + ow];
                                }
                            }
                        }
                    }
                }
            }
            self.add_grad(x, |i, _| dx[i]);
        }
        if self.needs(w) {
            let vx = self.nodes[x.0].values.clone();
            let mut dw = vec![0.0; cout * cin * k * k];
            for co in 0..cout {
                let g_plane = &g[co * h * wd..(co + 1) * h * wd];
                for ci in 0..cin {
                    let x_plane = &vx[ci * h * wd..(ci + 1) * h * wd];
                    for kh in 0..k {
                        for kw in 0..k {
                            let dh = kh as isize - pad as isize;
                            let dw_ = kw as isize - pad as isize;
                            let (h0, h1) = shifted_range(h, dh);
                            let (w0, w1) = shifted_range(wd, dw_);
                            let mut acc = 0.0;
                            for oh in h0..h1 {
                                let ih = (oh as isize + dh) as usize;
                                let iw0 = w0.wrapping_add_signed(dw_);
                                let gr = &g_plane[oh * wd + w0..oh * wd + w1];
                                let xr = &x_plane[ih * wd + iw0..ih * wd + iw0 + (w1 - w0)];
                                for (gv, xv) in gr.iter().zip(xr) {
                                    acc += gv * xv;
                                }
                            }
                            dw[((co * cin + ci) * k + kh) * k + kw] += acc;
                        }
                    }
                }
            }
            self.add_grad(w, |i, _| dw[i]);
        }
    }
}

/// Output index range `[lo, hi)` such that `index + shift` stays inside
/// `[0, size)`.
fn shifted_range(size: usize, shift: isize) -> (usize, usize) {
    let lo = (-shift).max(0) as usize;
    let hi = (size as isize - shift.max(0)).max(lo as isize) as usize;
    (lo, hi)
}

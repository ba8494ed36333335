//! Reverse-mode differentiation on an append-only tape.
//!
//! Nodes are appended in evaluation order, so the tape index order is a
//! topological order and `backward` visits nodes exactly once in reverse.
//! Gradients of leaf nodes accumulate (`+=`) across backward calls; calling
//! `backward` twice without zeroing doubles leaf gradients. Gradients of
//! interior nodes are transient and drained as the sweep consumes them.

use crate::error::{Result, TensorError};
use crate::kernels;
use crate::par::{self, Parallelism};
use crate::tensor::Tensor;

/// Below this element count the parallel fan-out costs more than it saves.
const PAR_ELEMWISE_MIN: usize = 1 << 14;
const PAR_CHUNK: usize = 1 << 15;

#[inline]
fn map2(par_mode: Parallelism, a: &[f32], b: &[f32], f: impl Fn(f32, f32) -> f32 + Sync) -> Vec<f32> {
    debug_assert_eq!(a.len(), b.len());
    let mut out = vec![0f32; a.len()];
    if a.len() < PAR_ELEMWISE_MIN {
        for (o, (x, y)) in out.iter_mut().zip(a.iter().zip(b)) {
            *o = f(*x, *y);
        }
    } else {
        par::for_each_chunk_mut(par_mode, &mut out, PAR_CHUNK, |ci, chunk| {
            let base = ci * PAR_CHUNK;
            for (j, o) in chunk.iter_mut().enumerate() {
                *o = f(a[base + j], b[base + j]);
            }
        });
    }
    out
}

#[inline]
fn map1(par_mode: Parallelism, a: &[f32], f: impl Fn(f32) -> f32 + Sync) -> Vec<f32> {
    let mut out = vec![0f32; a.len()];
    if a.len() < PAR_ELEMWISE_MIN {
        for (o, x) in out.iter_mut().zip(a) {
            *o = f(*x);
        }
    } else {
        par::for_each_chunk_mut(par_mode, &mut out, PAR_CHUNK, |ci, chunk| {
            let base = ci * PAR_CHUNK;
            for (j, o) in chunk.iter_mut().enumerate() {
                *o = f(a[base + j]);
            }
        });
    }
    out
}

/// Epsilon stabilizing the cosine-similarity denominator.
pub const EPS_COS: f32 = 1e-8;
/// Epsilon stabilizing l2 normalization.
pub const EPS_L2NORM: f32 = 1e-12;
/// Batch-norm variance epsilon.
pub const EPS_BN: f32 = 1e-5;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Per-sample plan for the resize-and-pad transform. `identity` leaves the
/// sample untouched; otherwise the sample is nearest-resized to (rh, rw) and
/// placed at offset (oy, ox) on a zero canvas of the original size.
#[derive(Debug, Clone, Copy)]
pub struct ResizePlan {
    pub identity: bool,
    pub rh: usize,
    pub rw: usize,
    pub oy: usize,
    pub ox: usize,
}

impl ResizePlan {
    pub fn identity() -> Self {
        Self { identity: true, rh: 0, rw: 0, oy: 0, ox: 0 }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    MatmulNn(Var, Var),
    MatmulNt(Var, Var),
    Conv2d { x: Var, w: Var, stride: usize, pad: usize },
    DepthwiseConv2d { x: Var, w: Var, stride: usize, pad: usize },
    Relu(Var),
    Sigmoid(Var),
    BatchNorm { x: Var, gamma: Var, beta: Var, mean: Vec<f32>, invstd: Vec<f32>, train: bool },
    MaxPool { x: Var, arg: Vec<u32> },
    GlobalAvgPool(Var),
    AddBiasRow(Var, Var),
    ScaleChannels { x: Var, s: Var },
    SoftmaxCrossEntropy { logits: Var, labels: Vec<u32> },
    Mse(Var, Var),
    CosineRows(Var, Var),
    StackCols2(Var, Var),
    L2NormalizeRows(Var),
    GaussianBlur { x: Var, kernel: Vec<f32>, k: usize },
    ResizePad { x: Var, plans: Vec<ResizePlan> },
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Single-threaded computation tape (its kernels may still fan out).
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f32>>>,
    par: Parallelism,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new(), par: Parallelism::auto() }
    }

    pub fn with_parallelism(par: Parallelism) -> Self {
        Self { nodes: Vec::new(), grads: Vec::new(), par }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node { value, requires_grad, op });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a node, if any.
    pub fn grad(&self, v: Var) -> Option<&[f32]> {
        self.grads[v.0].as_deref()
    }

    pub fn grad_tensor(&self, v: Var) -> Option<Tensor> {
        self.grads[v.0]
            .as_ref()
            .map(|g| Tensor::new(self.value(v).shape().to_vec(), g.clone()).expect("grad shape"))
    }

    pub fn zero_grad(&mut self, v: Var) {
        self.grads[v.0] = None;
    }

    fn rg2(&self, a: Var, b: Var) -> bool {
        self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad
    }

    fn same_shape(&self, context: &'static str, a: Var, b: Var) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(TensorError::ShapeMismatch {
                context,
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        Ok(())
    }

    // ---- elementwise ----

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = map2(self.par, self.value(a).data(), self.value(b).data(), |x, y| x + y);
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(t, self.rg2(a, b), Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let data = map2(self.par, self.value(a).data(), self.value(b).data(), |x, y| x - y);
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(t, self.rg2(a, b), Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = map2(self.par, self.value(a).data(), self.value(b).data(), |x, y| x * y);
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(t, self.rg2(a, b), Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f32) -> Result<Var> {
        let data = map1(self.par, self.value(a).data(), |x| c * x);
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(t, self.requires_grad(a), Op::Scale(a, c)))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let data = map1(self.par, self.value(a).data(), |x| x.max(0.0));
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(t, self.requires_grad(a), Op::Relu(a)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let data = self.value(a).data().iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(t, self.requires_grad(a), Op::Sigmoid(a)))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(a).clone().reshaped(shape)?;
        Ok(self.push(t, self.requires_grad(a), Op::Reshape(a)))
    }

    // ---- reductions ----

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = kernels::sum(self.value(a).data());
        Ok(self.push(Tensor::scalar(s), self.requires_grad(a), Op::Sum(a)))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel() as f32;
        let s = kernels::sum(self.value(a).data()) / n;
        Ok(self.push(Tensor::scalar(s), self.requires_grad(a), Op::Mean(a)))
    }

    // ---- linear algebra ----

    /// `a (m,k) @ b (k,n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, ka) = self.value(a).dims2()?;
        let (kb, n) = self.value(b).dims2()?;
        if ka != kb {
            return Err(TensorError::ShapeMismatch {
                context: "matmul",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let mut out = vec![0f32; m * n];
        kernels::matmul_nn(self.par, &mut out, self.value(a).data(), self.value(b).data(), m, ka, n);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, self.rg2(a, b), Op::MatmulNn(a, b)))
    }

    /// `a (m,k) @ b^T` with `b` stored `(n,k)`. This is the linear-layer map.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, ka) = self.value(a).dims2()?;
        let (n, kb) = self.value(b).dims2()?;
        if ka != kb {
            return Err(TensorError::ShapeMismatch {
                context: "matmul_nt",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let mut out = vec![0f32; m * n];
        kernels::matmul_nt(self.par, &mut out, self.value(a).data(), self.value(b).data(), m, ka, n);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, self.rg2(a, b), Op::MatmulNt(a, b)))
    }

    /// Fully connected layer: `x (n,d) @ w^T (d,c) + bias (c)`.
    pub fn linear(&mut self, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
        let y = self.matmul_nt(x, w)?;
        match bias {
            Some(b) => self.add_bias_row(y, b),
            None => Ok(y),
        }
    }

    pub fn add_bias_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (n, c) = self.value(x).dims2()?;
        if self.value(bias).shape() != [c] {
            return Err(TensorError::ShapeMismatch {
                context: "add_bias_row",
                lhs: self.value(x).shape().to_vec(),
                rhs: self.value(bias).shape().to_vec(),
            });
        }
        let mut out = self.value(x).data().to_vec();
        let b = self.value(bias).data();
        for row in out.chunks_mut(c) {
            for (o, bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
        let t = Tensor::new(vec![n, c], out)?;
        Ok(self.push(t, self.rg2(x, bias), Op::AddBiasRow(x, bias)))
    }

    // ---- convolution & friends ----

    /// 2-d convolution, NCHW input and OIKK weight, no bias.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let (n, ci, h, wd) = self.value(x).dims4()?;
        let (co, wi, kh, kw) = self.value(w).dims4()?;
        if wi != ci {
            return Err(TensorError::ShapeMismatch {
                context: "conv2d channels",
                lhs: self.value(x).shape().to_vec(),
                rhs: self.value(w).shape().to_vec(),
            });
        }
        if stride == 0 || h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(TensorError::InvalidDim(format!(
                "conv2d: input {:?} incompatible with kernel {}x{} stride {} pad {}",
                self.value(x).shape(),
                kh,
                kw,
                stride,
                pad
            )));
        }
        let ho = kernels::conv_out_dim(h, kh, stride, pad);
        let wo = kernels::conv_out_dim(wd, kw, stride, pad);
        let out = kernels::conv2d_forward(
            self.par,
            self.value(x).data(),
            self.value(w).data(),
            n,
            ci,
            h,
            wd,
            co,
            kh,
            kw,
            stride,
            pad,
        );
        let t = Tensor::new(vec![n, co, ho, wo], out)?;
        Ok(self.push(t, self.rg2(x, w), Op::Conv2d { x, w, stride, pad }))
    }

    /// Depthwise (per-channel) convolution; weight shape `(c,1,k,k)`.
    pub fn depthwise_conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let (n, c, h, wd) = self.value(x).dims4()?;
        let (cw, one, kh, kw) = self.value(w).dims4()?;
        if cw != c || one != 1 || kh != kw {
            return Err(TensorError::ShapeMismatch {
                context: "depthwise_conv2d",
                lhs: self.value(x).shape().to_vec(),
                rhs: self.value(w).shape().to_vec(),
            });
        }
        if stride == 0 || h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(TensorError::InvalidDim(format!(
                "depthwise_conv2d: input {:?} incompatible with kernel {} stride {} pad {}",
                self.value(x).shape(),
                kh,
                stride,
                pad
            )));
        }
        let ho = kernels::conv_out_dim(h, kh, stride, pad);
        let wo = kernels::conv_out_dim(wd, kw, stride, pad);
        let out = kernels::depthwise_conv2d_forward(
            self.par,
            self.value(x).data(),
            self.value(w).data(),
            n,
            c,
            h,
            wd,
            kh,
            stride,
            pad,
        );
        let t = Tensor::new(vec![n, c, ho, wo], out)?;
        Ok(self.push(t, self.rg2(x, w), Op::DepthwiseConv2d { x, w, stride, pad }))
    }

    pub fn maxpool2d(&mut self, x: Var, k: usize, stride: usize, pad: usize) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(TensorError::InvalidDim(format!(
                "maxpool2d: input {:?} smaller than window {}",
                self.value(x).shape(),
                k
            )));
        }
        let (out, arg) = kernels::maxpool2d_forward(self.par, self.value(x).data(), n, c, h, w, k, stride, pad);
        let ho = kernels::conv_out_dim(h, k, stride, pad);
        let wo = kernels::conv_out_dim(w, k, stride, pad);
        let t = Tensor::new(vec![n, c, ho, wo], out)?;
        Ok(self.push(t, self.requires_grad(x), Op::MaxPool { x, arg }))
    }

    pub fn global_avgpool(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let hw = (h * w) as f32;
        let data = self.value(x).data();
        let mut out = vec![0f32; n * c];
        for (i, o) in out.iter_mut().enumerate() {
            *o = kernels::sum(&data[i * h * w..(i + 1) * h * w]) / hw;
        }
        let t = Tensor::new(vec![n, c], out)?;
        Ok(self.push(t, self.requires_grad(x), Op::GlobalAvgPool(x)))
    }

    /// Per-channel batch normalization using the supplied statistics.
    fn batchnorm_with_stats(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<f32>,
        invstd: Vec<f32>,
        train: bool,
    ) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let hw = h * w;
        let g = self.value(gamma).data().to_vec();
        let b = self.value(beta).data().to_vec();
        let data = self.value(x).data();
        let mut out = vec![0f32; data.len()];
        par::for_each_chunk_mut(self.par, &mut out, hw, |pc, plane| {
            let ch = pc % c;
            let base = pc * hw;
            let (m, is, gc, bc) = (mean[ch], invstd[ch], g[ch], b[ch]);
            for (o, xi) in plane.iter_mut().zip(&data[base..base + hw]) {
                *o = gc * ((xi - m) * is) + bc;
            }
        });
        let _ = n;
        let t = Tensor::new(vec![n, c, h, w], out)?;
        let rg = self.rg2(x, gamma) || self.requires_grad(beta);
        Ok(self.push(t, rg, Op::BatchNorm { x, gamma, beta, mean, invstd, train }))
    }

    /// Training-mode batch norm. Normalizes with batch statistics and returns
    /// them (biased variance) so the caller can update running buffers.
    pub fn batchnorm2d_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
    ) -> Result<(Var, Vec<f32>, Vec<f32>)> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let hw = h * w;
        let m = (n * hw) as f32;
        let data = self.value(x).data();
        let mean: Vec<f32> = par::map_indices(self.par, c, |ch| {
            let mut acc = 0f32;
            for s in 0..n {
                let base = (s * c + ch) * hw;
                acc += kernels::sum(&data[base..base + hw]);
            }
            acc / m
        });
        let var: Vec<f32> = par::map_indices(self.par, c, |ch| {
            let mu = mean[ch];
            let mut lanes = [0f32; 8];
            for s in 0..n {
                let base = (s * c + ch) * hw;
                let mut it = data[base..base + hw].chunks_exact(8);
                for ca in &mut it {
                    for l in 0..8 {
                        let d = ca[l] - mu;
                        lanes[l] += d * d;
                    }
                }
                for (l, xi) in it.remainder().iter().enumerate() {
                    let d = xi - mu;
                    lanes[l] += d * d;
                }
            }
            let mut acc = 0f32;
            for l in lanes {
                acc += l;
            }
            acc / m
        });
        let invstd: Vec<f32> = var.iter().map(|v| 1.0 / (v + EPS_BN).sqrt()).collect();
        let out = self.batchnorm_with_stats(x, gamma, beta, mean.clone(), invstd, true)?;
        Ok((out, mean, var))
    }

    /// Eval-mode batch norm: a deterministic per-channel affine map.
    pub fn batchnorm2d_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[f32],
        running_var: &[f32],
    ) -> Result<Var> {
        let invstd: Vec<f32> = running_var.iter().map(|v| 1.0 / (v + EPS_BN).sqrt()).collect();
        self.batchnorm_with_stats(x, gamma, beta, running_mean.to_vec(), invstd, false)
    }

    /// Multiply each (h,w) plane of `x (n,c,h,w)` by `s (n,c)`.
    pub fn scale_channels(&mut self, x: Var, s: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let (ns, cs) = self.value(s).dims2()?;
        if ns != n || cs != c {
            return Err(TensorError::ShapeMismatch {
                context: "scale_channels",
                lhs: self.value(x).shape().to_vec(),
                rhs: self.value(s).shape().to_vec(),
            });
        }
        let hw = h * w;
        let sv = self.value(s).data().to_vec();
        let mut out = self.value(x).data().to_vec();
        for (i, plane) in out.chunks_mut(hw).enumerate() {
            let f = sv[i];
            for v in plane.iter_mut() {
                *v *= f;
            }
        }
        let t = Tensor::new(vec![n, c, h, w], out)?;
        Ok(self.push(t, self.rg2(x, s), Op::ScaleChannels { x, s }))
    }

    // ---- losses & metrics ----

    /// Mean cross-entropy of softmax(logits) against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[u32]) -> Result<Var> {
        let (n, c) = self.value(logits).dims2()?;
        if labels.len() != n {
            return Err(TensorError::InvalidDim(format!(
                "softmax_cross_entropy: {} labels for {} rows",
                labels.len(),
                n
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l as usize >= c) {
            return Err(TensorError::InvalidDim(format!("label {l} out of range for {c} classes")));
        }
        let data = self.value(logits).data();
        let mut loss = 0f32;
        for (row, &lab) in data.chunks(c).zip(labels) {
            let mx = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f32>().ln();
            loss += lse - row[lab as usize];
        }
        loss /= n as f32;
        Ok(self.push(
            Tensor::scalar(loss),
            self.requires_grad(logits),
            Op::SoftmaxCrossEntropy { logits, labels: labels.to_vec() },
        ))
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        let n = self.value(a).numel() as f32;
        let mut lanes = [0f32; 16];
        let da = self.value(a).data();
        let db = self.value(b).data();
        let mut i = 0;
        while i + 16 <= da.len() {
            for l in 0..16 {
                let d = da[i + l] - db[i + l];
                lanes[l] += d * d;
            }
            i += 16;
        }
        for (l, j) in (i..da.len()).enumerate() {
            let d = da[j] - db[j];
            lanes[l] += d * d;
        }
        let mut s = 0f32;
        for l in lanes {
            s += l;
        }
        Ok(self.push(Tensor::scalar(s / n), self.rg2(a, b), Op::Mse(a, b)))
    }

    /// Row-wise cosine similarity of two `(n,d)` tensors (rank-1 inputs are
    /// treated as a single row). Norms are clamped below by [`EPS_COS`].
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("cosine_similarity", a, b)?;
        let (n, d) = row_view(self.value(a).shape());
        let da = self.value(a).data();
        let db = self.value(b).data();
        let mut out = vec![0f32; n];
        for i in 0..n {
            let ra = &da[i * d..(i + 1) * d];
            let rb = &db[i * d..(i + 1) * d];
            let na = kernels::dot(ra, ra).sqrt().max(EPS_COS);
            let nb = kernels::dot(rb, rb).sqrt().max(EPS_COS);
            out[i] = kernels::dot(ra, rb) / (na * nb);
        }
        let t = Tensor::new(vec![n], out)?;
        Ok(self.push(t, self.rg2(a, b), Op::CosineRows(a, b)))
    }

    /// Interleave two length-n vectors into an `(n,2)` matrix (column 0 from
    /// `a`); the building block for two-way logit rows.
    pub fn stack_cols2(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("stack_cols2", a, b)?;
        let n = self.value(a).numel();
        let da = self.value(a).data();
        let db = self.value(b).data();
        let mut out = vec![0f32; 2 * n];
        for i in 0..n {
            out[2 * i] = da[i];
            out[2 * i + 1] = db[i];
        }
        let t = Tensor::new(vec![n, 2], out)?;
        Ok(self.push(t, self.rg2(a, b), Op::StackCols2(a, b)))
    }

    /// Row-wise l2 normalization of an `(n,d)` tensor (rank-1 = one row).
    pub fn l2_normalize(&mut self, a: Var) -> Result<Var> {
        let (n, d) = row_view(self.value(a).shape());
        let da = self.value(a).data();
        let mut out = vec![0f32; n * d];
        for i in 0..n {
            let ra = &da[i * d..(i + 1) * d];
            let norm = kernels::dot(ra, ra).sqrt().max(EPS_L2NORM);
            for (o, v) in out[i * d..(i + 1) * d].iter_mut().zip(ra) {
                *o = v / norm;
            }
        }
        let t = Tensor::new(self.value(a).shape().to_vec(), out)?;
        Ok(self.push(t, self.requires_grad(a), Op::L2NormalizeRows(a)))
    }

    /// Depthwise Gaussian blur with a fixed kernel (same padding).
    pub fn gaussian_blur(&mut self, x: Var, kernel: &[f32]) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let k = (kernel.len() as f64).sqrt() as usize;
        if k * k != kernel.len() || k % 2 == 0 {
            return Err(TensorError::InvalidDim(format!(
                "gaussian_blur: kernel length {} is not an odd square",
                kernel.len()
            )));
        }
        let out = kernels::depthwise_blur(self.par, self.value(x).data(), kernel, n, c, h, w, k);
        let t = Tensor::new(vec![n, c, h, w], out)?;
        Ok(self.push(t, self.requires_grad(x), Op::GaussianBlur { x, kernel: kernel.to_vec(), k }))
    }

    /// Per-sample nearest resize onto a zero canvas of the original size.
    pub fn resize_pad(&mut self, x: Var, plans: Vec<ResizePlan>) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if plans.len() != n {
            return Err(TensorError::InvalidDim(format!("resize_pad: {} plans for {} samples", plans.len(), n)));
        }
        for p in &plans {
            if !p.identity && (p.rh == 0 || p.rw == 0 || p.oy + p.rh > h || p.ox + p.rw > w) {
                return Err(TensorError::InvalidDim(format!("resize_pad: bad plan {p:?} for {h}x{w}")));
            }
        }
        let data = self.value(x).data();
        let mut out = vec![0f32; data.len()];
        for (s, p) in plans.iter().enumerate() {
            let src = &data[s * c * h * w..(s + 1) * c * h * w];
            let dst = &mut out[s * c * h * w..(s + 1) * c * h * w];
            if p.identity {
                dst.copy_from_slice(src);
                continue;
            }
            for ch in 0..c {
                for y in 0..p.rh {
                    let sy = y * h / p.rh;
                    for xo in 0..p.rw {
                        let sx = xo * w / p.rw;
                        dst[ch * h * w + (p.oy + y) * w + p.ox + xo] = src[ch * h * w + sy * w + sx];
                    }
                }
            }
        }
        let t = Tensor::new(vec![n, c, h, w], out)?;
        Ok(self.push(t, self.requires_grad(x), Op::ResizePad { x, plans }))
    }

    // ---- backward ----

    /// Reverse sweep from a scalar loss. Leaf gradients accumulate; interior
    /// gradients are drained as they are consumed.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(TensorError::NotScalar {
                context: "backward",
                shape: self.value(loss).shape().to_vec(),
            });
        }
        if !self.requires_grad(loss) {
            return Ok(());
        }
        self.accumulate(loss, &[1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.grads[i].take() else { continue };
            self.propagate(i, &g)?;
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, contrib: &[f32]) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let slot = &mut self.grads[v.0];
        match slot {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(contrib) {
                    *gi += ci;
                }
            }
            None => *slot = Some(contrib.to_vec()),
        }
    }

    fn accumulate_owned(&mut self, v: Var, contrib: Vec<f32>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let slot = &mut self.grads[v.0];
        match slot {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(contrib) {
                    *gi += ci;
                }
            }
            None => *slot = Some(contrib),
        }
    }

    #[allow(clippy::needless_range_loop)]
    fn propagate(&mut self, idx: usize, g: &[f32]) -> Result<()> {
        let op = self.nodes[idx].op.clone();
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(a, g);
                self.accumulate(b, g);
            }
            Op::Sub(a, b) => {
                self.accumulate(a, g);
                let neg = map1(self.par, g, |v| -v);
                self.accumulate_owned(b, neg);
            }
            Op::Mul(a, b) => {
                let ga = map2(self.par, g, self.value(b).data(), |gi, bv| gi * bv);
                let gb = map2(self.par, g, self.value(a).data(), |gi, av| gi * av);
                self.accumulate_owned(a, ga);
                self.accumulate_owned(b, gb);
            }
            Op::Scale(a, c) => {
                let ga = map1(self.par, g, |gi| gi * c);
                self.accumulate_owned(a, ga);
            }
            Op::Reshape(a) => self.accumulate(a, g),
            Op::Sum(a) => {
                let ga = vec![g[0]; self.value(a).numel()];
                self.accumulate_owned(a, ga);
            }
            Op::Mean(a) => {
                let n = self.value(a).numel() as f32;
                let ga = vec![g[0] / n; self.value(a).numel()];
                self.accumulate_owned(a, ga);
            }
            Op::MatmulNn(a, b) => {
                let (m, k) = self.value(a).dims2()?;
                let (_, n) = self.value(b).dims2()?;
                if self.requires_grad(a) {
                    // ga (m,k) += g (m,n) @ b^T; b's (k,n) layout is already
                    // the transposed-operand layout matmul_nt expects.
                    let mut ga = vec![0f32; m * k];
                    kernels::matmul_nt(self.par, &mut ga, g, self.value(b).data(), m, n, k);
                    self.accumulate_owned(a, ga);
                }
                if self.requires_grad(b) {
                    // gb (k,n) += a^T (k,m) @ g (m,n)
                    let mut gb = vec![0f32; k * n];
                    kernels::matmul_tn(self.par, &mut gb, self.value(a).data(), g, k, m, n);
                    self.accumulate_owned(b, gb);
                }
            }
            Op::MatmulNt(a, b) => {
                let (m, k) = self.value(a).dims2()?;
                let (n, _) = self.value(b).dims2()?;
                if self.requires_grad(a) {
                    // ga (m,k) += g (m,n) @ b (n,k)
                    let mut ga = vec![0f32; m * k];
                    kernels::matmul_nn(self.par, &mut ga, g, self.value(b).data(), m, n, k);
                    self.accumulate_owned(a, ga);
                }
                if self.requires_grad(b) {
                    // gb (n,k) += g^T (n,m) @ a (m,k)
                    let mut gb = vec![0f32; n * k];
                    kernels::matmul_tn(self.par, &mut gb, g, self.value(a).data(), n, m, k);
                    self.accumulate_owned(b, gb);
                }
            }
            Op::Conv2d { x, w, stride, pad } => {
                let (n, ci, h, wd) = self.value(x).dims4()?;
                let (co, _, kh, kw) = self.value(w).dims4()?;
                if self.requires_grad(x) {
                    let gx = kernels::conv2d_grad_input(
                        self.par,
                        g,
                        self.value(w).data(),
                        n,
                        ci,
                        h,
                        wd,
                        co,
                        kh,
                        kw,
                        stride,
                        pad,
                    );
                    self.accumulate_owned(x, gx);
                }
                if self.requires_grad(w) {
                    let gw = kernels::conv2d_grad_weight(
                        self.par,
                        self.value(x).data(),
                        g,
                        n,
                        ci,
                        h,
                        wd,
                        co,
                        kh,
                        kw,
                        stride,
                        pad,
                    );
                    self.accumulate_owned(w, gw);
                }
            }
            Op::DepthwiseConv2d { x, w, stride, pad } => {
                let (n, c, h, wd) = self.value(x).dims4()?;
                let (_, _, kh, _) = self.value(w).dims4()?;
                if self.requires_grad(x) {
                    let gx = kernels::depthwise_conv2d_grad_input(
                        self.par,
                        g,
                        self.value(w).data(),
                        n,
                        c,
                        h,
                        wd,
                        kh,
                        stride,
                        pad,
                    );
                    self.accumulate_owned(x, gx);
                }
                if self.requires_grad(w) {
                    let gw = kernels::depthwise_conv2d_grad_weight(
                        self.par,
                        self.value(x).data(),
                        g,
                        n,
                        c,
                        h,
                        wd,
                        kh,
                        stride,
                        pad,
                    );
                    self.accumulate_owned(w, gw);
                }
            }
            Op::Relu(a) => {
                // Subgradient 0 at exactly 0.
                let ga = map2(self.par, g, self.value(a).data(), |gi, x| if x > 0.0 { gi } else { 0.0 });
                self.accumulate_owned(a, ga);
            }
            Op::Sigmoid(a) => {
                let ga: Vec<f32> = g
                    .iter()
                    .zip(self.nodes[idx].value.data())
                    .map(|(gi, &y)| gi * y * (1.0 - y))
                    .collect();
                self.accumulate_owned(a, ga);
            }
            Op::BatchNorm { x, gamma, beta, mean, invstd, train } => {
                self.batchnorm_backward(x, gamma, beta, &mean, &invstd, train, g)?;
            }
            Op::MaxPool { x, arg } => {
                let (n, c, h, w) = self.value(x).dims4()?;
                let out_hw = g.len() / (n * c);
                let mut gx = vec![0f32; n * c * h * w];
                for pc in 0..n * c {
                    let base = pc * h * w;
                    for (j, &a) in arg[pc * out_hw..(pc + 1) * out_hw].iter().enumerate() {
                        gx[base + a as usize] += g[pc * out_hw + j];
                    }
                }
                self.accumulate_owned(x, gx);
            }
            Op::GlobalAvgPool(a) => {
                let (n, c, h, w) = self.value(a).dims4()?;
                let hw = h * w;
                let mut ga = vec![0f32; n * c * hw];
                for (i, plane) in ga.chunks_mut(hw).enumerate() {
                    let v = g[i] / hw as f32;
                    plane.fill(v);
                }
                let _ = (n, c);
                self.accumulate_owned(a, ga);
            }
            Op::AddBiasRow(x, bias) => {
                let (n, c) = self.value(x).dims2()?;
                self.accumulate(x, g);
                if self.requires_grad(bias) {
                    let mut gb = vec![0f32; c];
                    for row in 0..n {
                        for j in 0..c {
                            gb[j] += g[row * c + j];
                        }
                    }
                    self.accumulate_owned(bias, gb);
                }
            }
            Op::ScaleChannels { x, s } => {
                let (n, c, h, w) = self.value(x).dims4()?;
                let hw = h * w;
                if self.requires_grad(x) {
                    let sv = self.value(s).data();
                    let mut gx = vec![0f32; n * c * hw];
                    for (i, plane) in gx.chunks_mut(hw).enumerate() {
                        let f = sv[i];
                        for (o, gi) in plane.iter_mut().zip(&g[i * hw..(i + 1) * hw]) {
                            *o = gi * f;
                        }
                    }
                    self.accumulate_owned(x, gx);
                }
                if self.requires_grad(s) {
                    let xv = self.value(x).data();
                    let mut gs = vec![0f32; n * c];
                    for i in 0..n * c {
                        gs[i] = kernels::dot(&g[i * hw..(i + 1) * hw], &xv[i * hw..(i + 1) * hw]);
                    }
                    self.accumulate_owned(s, gs);
                }
            }
            Op::SoftmaxCrossEntropy { logits, labels } => {
                let (n, c) = self.value(logits).dims2()?;
                let data = self.value(logits).data();
                let scale = g[0] / n as f32;
                let mut gl = vec![0f32; n * c];
                for (i, (row, &lab)) in data.chunks(c).zip(&labels).enumerate() {
                    let mx = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                    let denom: f32 = row.iter().map(|v| (v - mx).exp()).sum();
                    for j in 0..c {
                        let p = (row[j] - mx).exp() / denom;
                        gl[i * c + j] = scale * (p - if j == lab as usize { 1.0 } else { 0.0 });
                    }
                }
                self.accumulate_owned(logits, gl);
            }
            Op::Mse(a, b) => {
                let n = self.value(a).numel() as f32;
                let scale = 2.0 * g[0] / n;
                let (ga, gb) = {
                    let da = self.value(a).data();
                    let db = self.value(b).data();
                    let ga: Vec<f32> = da.iter().zip(db).map(|(x, y)| scale * (x - y)).collect();
                    let gb: Vec<f32> = ga.iter().map(|v| -v).collect();
                    (ga, gb)
                };
                if self.requires_grad(a) {
                    self.accumulate_owned(a, ga);
                }
                if self.requires_grad(b) {
                    self.accumulate_owned(b, gb);
                }
            }
            Op::CosineRows(a, b) => {
                let (n, d) = row_view(self.value(a).shape());
                let da = self.value(a).data();
                let db = self.value(b).data();
                let mut ga = vec![0f32; n * d];
                let mut gb = vec![0f32; n * d];
                for i in 0..n {
                    let ra = &da[i * d..(i + 1) * d];
                    let rb = &db[i * d..(i + 1) * d];
                    let na = kernels::dot(ra, ra).sqrt().max(EPS_COS);
                    let nb = kernels::dot(rb, rb).sqrt().max(EPS_COS);
                    let s = kernels::dot(ra, rb);
                    let cosv = s / (na * nb);
                    let gi = g[i];
                    for j in 0..d {
                        ga[i * d + j] = gi * (rb[j] / (na * nb) - cosv * ra[j] / (na * na));
                        gb[i * d + j] = gi * (ra[j] / (na * nb) - cosv * rb[j] / (nb * nb));
                    }
                }
                if self.requires_grad(a) {
                    self.accumulate_owned(a, ga);
                }
                if self.requires_grad(b) {
                    self.accumulate_owned(b, gb);
                }
            }
            Op::StackCols2(a, b) => {
                let n = self.value(a).numel();
                let mut ga = vec![0f32; n];
                let mut gb = vec![0f32; n];
                for i in 0..n {
                    ga[i] = g[2 * i];
                    gb[i] = g[2 * i + 1];
                }
                if self.requires_grad(a) {
                    self.accumulate_owned(a, ga);
                }
                if self.requires_grad(b) {
                    self.accumulate_owned(b, gb);
                }
            }
            Op::L2NormalizeRows(a) => {
                let (n, d) = row_view(self.value(a).shape());
                let da = self.value(a).data();
                let mut ga = vec![0f32; n * d];
                for i in 0..n {
                    let ra = &da[i * d..(i + 1) * d];
                    let gr = &g[i * d..(i + 1) * d];
                    let norm = kernels::dot(ra, ra).sqrt().max(EPS_L2NORM);
                    // ga = (gr - y * <gr, y>) / norm with y = ra / norm
                    let gy = kernels::dot(gr, ra) / (norm * norm);
                    for j in 0..d {
                        ga[i * d + j] = (gr[j] - ra[j] * gy) / norm;
                    }
                }
                self.accumulate_owned(a, ga);
            }
            Op::GaussianBlur { x, kernel, k } => {
                let (n, c, h, w) = self.value(x).dims4()?;
                // Symmetric kernel: the adjoint is the same blur.
                let gx = kernels::depthwise_blur(self.par, g, &kernel, n, c, h, w, k);
                self.accumulate_owned(x, gx);
            }
            Op::ResizePad { x, plans } => {
                let (n, c, h, w) = self.value(x).dims4()?;
                let mut gx = vec![0f32; n * c * h * w];
                for (s, p) in plans.iter().enumerate() {
                    let gsrc = &g[s * c * h * w..(s + 1) * c * h * w];
                    let gdst = &mut gx[s * c * h * w..(s + 1) * c * h * w];
                    if p.identity {
                        for (o, gi) in gdst.iter_mut().zip(gsrc) {
                            *o += gi;
                        }
                        continue;
                    }
                    for ch in 0..c {
                        for y in 0..p.rh {
                            let sy = y * h / p.rh;
                            for xo in 0..p.rw {
                                let sx = xo * w / p.rw;
                                gdst[ch * h * w + sy * w + sx] += gsrc[ch * h * w + (p.oy + y) * w + p.ox + xo];
                            }
                        }
                    }
                }
                self.accumulate_owned(x, gx);
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn batchnorm_backward(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f32],
        invstd: &[f32],
        train: bool,
        g: &[f32],
    ) -> Result<()> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let hw = h * w;
        let m = (n * hw) as f32;

        let (sum_dy, sum_dy_xhat, gx) = {
            let data = self.value(x).data();
            let gv = self.value(gamma).data();
            // Per-channel sums of dY and dY*x_hat, one channel per task.
            let sums: Vec<(f32, f32)> = par::map_indices(self.par, c, |ch| {
                let (mu, is) = (mean[ch], invstd[ch]);
                let mut a0 = 0f32;
                let mut a1 = 0f32;
                for s in 0..n {
                    let base = (s * c + ch) * hw;
                    for (gi, xi) in g[base..base + hw].iter().zip(&data[base..base + hw]) {
                        a0 += gi;
                        a1 += gi * ((xi - mu) * is);
                    }
                }
                (a0, a1)
            });
            let sum_dy: Vec<f32> = sums.iter().map(|(a, _)| *a).collect();
            let sum_dy_xhat: Vec<f32> = sums.iter().map(|(_, b)| *b).collect();
            let gx = if self.requires_grad(x) {
                let mut gx = vec![0f32; data.len()];
                par::for_each_chunk_mut(self.par, &mut gx, hw, |pc, plane| {
                    let ch = pc % c;
                    let base = pc * hw;
                    let (mu, is, gc) = (mean[ch], invstd[ch], gv[ch]);
                    if train {
                        let k1 = sum_dy[ch] / m;
                        let k2 = sum_dy_xhat[ch] / m;
                        for (j, o) in plane.iter_mut().enumerate() {
                            let xhat = (data[base + j] - mu) * is;
                            *o = gc * is * (g[base + j] - k1 - xhat * k2);
                        }
                    } else {
                        for (j, o) in plane.iter_mut().enumerate() {
                            *o = gc * is * g[base + j];
                        }
                    }
                });
                Some(gx)
            } else {
                None
            };
            (sum_dy, sum_dy_xhat, gx)
        };
        if self.requires_grad(gamma) {
            self.accumulate_owned(gamma, sum_dy_xhat);
        }
        if self.requires_grad(beta) {
            self.accumulate_owned(beta, sum_dy);
        }
        if let Some(gx) = gx {
            self.accumulate_owned(x, gx);
        }
        Ok(())
    }
}

fn row_view(shape: &[usize]) -> (usize, usize) {
    match shape {
        [] => (1, 1),
        [d] => (1, *d),
        _ => (shape[0], shape[1..].iter().product()),
    }
}


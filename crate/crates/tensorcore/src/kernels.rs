//! Dense f32 kernels: blocked matrix multiplies, im2col convolution,
//! pooling and the Gaussian blur used by gradient smoothing.
//!
//! Determinism contract: every output element is produced by exactly one
//! task accumulating in a fixed order, so sequential and rayon execution
//! give bit-identical results. Reductions never reassociate across threads.

use crate::par::{self, Parallelism};

/// Register-tile rows.
const TI: usize = 4;
/// Register-tile columns.
const TJ: usize = 16;
/// K-block depth; keeps the streamed B panel cache-resident.
const KB: usize = 256;

#[inline]
fn axpy(c: &mut [f32], alpha: f32, b: &[f32]) {
    debug_assert_eq!(c.len(), b.len());
    for (ci, bi) in c.iter_mut().zip(b.iter()) {
        *ci += alpha * *bi;
    }
}

/// Accumulate a TIxTJ tile directly into C:
/// `c[(i0+r)*n + j0 + l] += sum_dk a[(r0+r)*a_rstride + a_base + dk*a_kstride]
///                                 * b[b_base + dk*b_kstride + l]`.
///
/// Dispatches to an FMA microkernel when the CPU has one. The FMA path fuses
/// the multiply-add (single rounding), which the scalar fallback does not;
/// results are bit-identical across thread counts and runs on one machine.
#[allow(clippy::too_many_arguments)]
#[inline]
fn tile_kernel(
    c: &mut [f32],
    c_base: usize,
    c_rstride: usize,
    kw: usize,
    a: &[f32],
    a_base: usize,
    a_rstride: usize,
    a_kstride: usize,
    b: &[f32],
    b_base: usize,
    b_kstride: usize,
) {
    #[cfg(target_arch = "x86_64")]
    {
        if *FMA_AVAILABLE {
            // Safety: FMA+AVX2 presence checked once at startup; all indices
            // stay in bounds by the same arithmetic as the scalar path and
            // are asserted before the raw-pointer loop.
            assert!(c_base + (TI - 1) * c_rstride + TJ <= c.len());
            assert!(a_base + (TI - 1) * a_rstride + (kw - 1) * a_kstride < a.len());
            assert!(b_base + (kw - 1) * b_kstride + TJ <= b.len());
            unsafe {
                tile_kernel_fma(c, c_base, c_rstride, kw, a, a_base, a_rstride, a_kstride, b, b_base, b_kstride);
            }
            return;
        }
    }
    tile_kernel_generic(c, c_base, c_rstride, kw, a, a_base, a_rstride, a_kstride, b, b_base, b_kstride);
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn tile_kernel_generic(
    c: &mut [f32],
    c_base: usize,
    c_rstride: usize,
    kw: usize,
    a: &[f32],
    a_base: usize,
    a_rstride: usize,
    a_kstride: usize,
    b: &[f32],
    b_base: usize,
    b_kstride: usize,
) {
    let mut acc = [[0f32; TJ]; TI];
    for dk in 0..kw {
        let b_row = &b[b_base + dk * b_kstride..b_base + dk * b_kstride + TJ];
        for (r, acc_row) in acc.iter_mut().enumerate() {
            let av = a[a_base + r * a_rstride + dk * a_kstride];
            for l in 0..TJ {
                acc_row[l] += av * b_row[l];
            }
        }
    }
    for (r, acc_row) in acc.iter().enumerate() {
        let c_row = &mut c[c_base + r * c_rstride..c_base + r * c_rstride + TJ];
        for l in 0..TJ {
            c_row[l] += acc_row[l];
        }
    }
}

#[cfg(target_arch = "x86_64")]
static FMA_AVAILABLE: std::sync::LazyLock<bool> =
    std::sync::LazyLock::new(|| is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma"));

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
#[allow(clippy::too_many_arguments)]
unsafe fn tile_kernel_fma(
    c: &mut [f32],
    c_base: usize,
    c_rstride: usize,
    kw: usize,
    a: &[f32],
    a_base: usize,
    a_rstride: usize,
    a_kstride: usize,
    b: &[f32],
    b_base: usize,
    b_kstride: usize,
) {
    use core::arch::x86_64::*;
    // 4 rows x 2 vectors of 8 = 4x16 accumulators; fits the ymm register file.
    let mut vacc = [[_mm256_setzero_ps(); 2]; TI];
    let bp = b.as_ptr().add(b_base);
    let ap = a.as_ptr().add(a_base);
    for dk in 0..kw {
        let brow = bp.add(dk * b_kstride);
        let b0 = _mm256_loadu_ps(brow);
        let b1 = _mm256_loadu_ps(brow.add(8));
        for (r, vr) in vacc.iter_mut().enumerate() {
            let av = _mm256_set1_ps(*ap.add(r * a_rstride + dk * a_kstride));
            vr[0] = _mm256_fmadd_ps(av, b0, vr[0]);
            vr[1] = _mm256_fmadd_ps(av, b1, vr[1]);
        }
    }
    let cp = c.as_mut_ptr().add(c_base);
    for (r, vr) in vacc.iter().enumerate() {
        let crow = cp.add(r * c_rstride);
        let c0 = _mm256_loadu_ps(crow);
        let c1 = _mm256_loadu_ps(crow.add(8));
        _mm256_storeu_ps(crow, _mm256_add_ps(c0, vr[0]));
        _mm256_storeu_ps(crow.add(8), _mm256_add_ps(c1, vr[1]));
    }
}

/// Deterministic vectorizable dot product: fixed 16-lane accumulation.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [0f32; 16];
    let mut ia = a.chunks_exact(16);
    let mut ib = b.chunks_exact(16);
    for (ca, cb) in (&mut ia).zip(&mut ib) {
        for l in 0..16 {
            lanes[l] += ca[l] * cb[l];
        }
    }
    for (l, (x, y)) in ia.remainder().iter().zip(ib.remainder()).enumerate() {
        lanes[l] += x * y;
    }
    let mut s = 0.0;
    for l in lanes {
        s += l;
    }
    s
}

/// Deterministic sum with the same fixed-lane scheme as [`dot`].
#[inline]
pub fn sum(a: &[f32]) -> f32 {
    let mut lanes = [0f32; 16];
    let mut it = a.chunks_exact(16);
    for ca in &mut it {
        for l in 0..16 {
            lanes[l] += ca[l];
        }
    }
    for (l, x) in it.remainder().iter().enumerate() {
        lanes[l] += x;
    }
    let mut s = 0.0;
    for l in lanes {
        s += l;
    }
    s
}

fn row_chunk(par: Parallelism, m: usize) -> usize {
    // Enough chunks to feed the pool without shredding B-panel reuse.
    // Chunks stay TI-aligned so tile/tail row coverage is identical for any
    // thread count (the FMA tile and the scalar tail round differently).
    let threads = match par {
        Parallelism::Sequential => return m.max(1),
        #[cfg(feature = "parallel")]
        Parallelism::Rayon => rayon::current_num_threads(),
    };
    m.div_ceil(4 * threads).next_multiple_of(TI)
}

/// `c (m,n) += a (m,k) @ b (k,n)`, all row-major.
///
/// Register-tiled: each TIxTJ output tile accumulates over a k-block
/// entirely in registers, so C is touched once per k-block and the k
/// summation order is fixed per element regardless of threading.
pub fn matmul_nn(par: Parallelism, c: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), m * n);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let rc = row_chunk(par, m);
    par::for_each_chunk_mut(par, c, rc * n, |ci, c_rows| {
        let r0 = ci * rc;
        let rows = c_rows.len() / n;
        let mut panel = vec![0f32; KB * TJ];
        for k0 in (0..k).step_by(KB) {
            let kw = KB.min(k - k0);
            let mut j0 = 0;
            while j0 < n {
                let jw = TJ.min(n - j0);
                if jw == TJ {
                    // Pack the kw x TJ panel of B contiguously: B rows sit a
                    // full matrix row apart, which thrashes L1 sets when n is
                    // a large power of two.
                    for dk in 0..kw {
                        panel[dk * TJ..(dk + 1) * TJ]
                            .copy_from_slice(&b[(k0 + dk) * n + j0..(k0 + dk) * n + j0 + TJ]);
                    }
                }
                let mut i0 = 0;
                while i0 < rows {
                    let iw = TI.min(rows - i0);
                    if iw == TI && jw == TJ {
                        tile_kernel(c_rows, i0 * n + j0, n, kw, a, (r0 + i0) * k + k0, k, 1, &panel, 0, TJ);
                    } else if jw == TJ {
                        for r in 0..iw {
                            let c_row = &mut c_rows[(i0 + r) * n + j0..(i0 + r) * n + j0 + jw];
                            for dk in 0..kw {
                                let av = a[(r0 + i0 + r) * k + k0 + dk];
                                axpy(c_row, av, &panel[dk * TJ..dk * TJ + jw]);
                            }
                        }
                    } else {
                        for r in 0..iw {
                            let c_row = &mut c_rows[(i0 + r) * n + j0..(i0 + r) * n + j0 + jw];
                            for dk in 0..kw {
                                let av = a[(r0 + i0 + r) * k + k0 + dk];
                                axpy(c_row, av, &b[(k0 + dk) * n + j0..(k0 + dk) * n + j0 + jw]);
                            }
                        }
                    }
                    i0 += iw;
                }
                j0 += jw;
            }
        }
    });
}

/// `c (m,n) += a (m,k) @ b^T` where `b` is stored as `(n,k)`.
pub fn matmul_nt(par: Parallelism, c: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), m * n);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    let rc = row_chunk(par, m);
    par::for_each_chunk_mut(par, c, rc * n, |ci, c_rows| {
        let r0 = ci * rc;
        let rows = c_rows.len() / n;
        for i in 0..rows {
            let a_row = &a[(r0 + i) * k..(r0 + i) * k + k];
            for j in 0..n {
                c_rows[i * n + j] += dot(a_row, &b[j * k..j * k + k]);
            }
        }
    });
}

/// `c (m,n) += a^T @ b` where `a` is stored as `(k,m)` and `b` as `(k,n)`.
pub fn matmul_tn(par: Parallelism, c: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), m * n);
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    let rc = row_chunk(par, m);
    par::for_each_chunk_mut(par, c, rc * n, |ci, c_rows| {
        let r0 = ci * rc;
        let rows = c_rows.len() / n;
        for k0 in (0..k).step_by(KB) {
            let kw = KB.min(k - k0);
            let mut j0 = 0;
            while j0 < n {
                let jw = TJ.min(n - j0);
                let mut i0 = 0;
                while i0 < rows {
                    let iw = TI.min(rows - i0);
                    if iw == TI && jw == TJ {
                        tile_kernel(c_rows, i0 * n + j0, n, kw, a, k0 * m + r0 + i0, 1, m, b, k0 * n + j0, n);
                    } else {
                        for r in 0..iw {
                            let c_row = &mut c_rows[(i0 + r) * n + j0..(i0 + r) * n + j0 + jw];
                            for dk in 0..kw {
                                let av = a[(k0 + dk) * m + r0 + i0 + r];
                                axpy(c_row, av, &b[(k0 + dk) * n + j0..(k0 + dk) * n + j0 + jw]);
                            }
                        }
                    }
                    i0 += iw;
                }
                j0 += jw;
            }
        }
    });
}

/// Cache-blocked transpose: `dst (cols, rows) = src (rows, cols)^T`.
fn transpose_blocked(src: &[f32], dst: &mut [f32], rows: usize, cols: usize) {
    const TB: usize = 16;
    for r0 in (0..rows).step_by(TB) {
        let r1 = (r0 + TB).min(rows);
        for c0 in (0..cols).step_by(TB) {
            let c1 = (c0 + TB).min(cols);
            for r in r0..r1 {
                for c in c0..c1 {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Output spatial size of a convolution/pool dimension.
#[inline]
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

/// Gather one sample's patches into `cols (c*k*k, ho*wo)`, zero padding.
/// Stride-1 rows are segment copies; other strides fall back to the
/// element-wise gather. Every element of `cols` is written.
fn im2col_sample(
    x: &[f32], // (c,h,w)
    cols: &mut [f32],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) {
    let ho = conv_out_dim(h, kh, stride, pad);
    let wo = conv_out_dim(w, kw, stride, pad);
    let hw_out = ho * wo;
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((ci * kh + ky) * kw + kx) * hw_out;
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let dst = &mut cols[row + oy * wo..row + (oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src_row = &x[ci * h * w + iy as usize * w..ci * h * w + (iy as usize + 1) * w];
                    if stride == 1 {
                        // ix = ox + kx - pad; valid ox in [lo, hi)
                        let lo = pad.saturating_sub(kx).min(wo);
                        let hi = (w + pad - kx).min(wo);
                        dst[..lo].fill(0.0);
                        dst[lo..hi].copy_from_slice(&src_row[lo + kx - pad..hi + kx - pad]);
                        dst[hi..].fill(0.0);
                    } else {
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            *d = if ix < 0 || ix >= w as isize { 0.0 } else { src_row[ix as usize] };
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add `cols` back into one sample's input gradient.
fn col2im_sample(
    cols: &[f32],
    gx: &mut [f32], // (c,h,w)
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) {
    let ho = conv_out_dim(h, kh, stride, pad);
    let wo = conv_out_dim(w, kw, stride, pad);
    let hw_out = ho * wo;
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((ci * kh + ky) * kw + kx) * hw_out;
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &cols[row + oy * wo..row + (oy + 1) * wo];
                    let dst_base = ci * h * w + iy as usize * w;
                    if stride == 1 {
                        let lo = pad.saturating_sub(kx).min(wo);
                        let hi = (w + pad - kx).min(wo);
                        let dst = &mut gx[dst_base + lo + kx - pad..dst_base + hi + kx - pad];
                        for (d, s) in dst.iter_mut().zip(&src[lo..hi]) {
                            *d += s;
                        }
                    } else {
                        for (ox, s) in src.iter().enumerate() {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                gx[dst_base + ix as usize] += s;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Conv2d forward, im2col lowering per sample, parallel over the batch.
/// `x (n,ci,h,w)`, `weight (co,ci,kh,kw)` -> `(n,co,ho,wo)`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_forward(
    par: Parallelism,
    x: &[f32],
    weight: &[f32],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Vec<f32> {
    let ho = conv_out_dim(h, kh, stride, pad);
    let wo = conv_out_dim(w, kw, stride, pad);
    let ckk = ci * kh * kw;
    let hw_out = ho * wo;
    let mut out = vec![0f32; n * co * hw_out];
    par::for_each_chunk_mut(par, &mut out, SAMPLES_PER_TASK * co * hw_out, |task, out_t| {
        let mut cols = vec![0f32; ckk * hw_out];
        let s0 = task * SAMPLES_PER_TASK;
        for (ds, out_s) in out_t.chunks_mut(co * hw_out).enumerate() {
            let s = s0 + ds;
            im2col_sample(&x[s * ci * h * w..(s + 1) * ci * h * w], &mut cols, ci, h, w, kh, kw, stride, pad);
            // Per-sample GEMM runs inside an outer parallel task already.
            matmul_nn(Parallelism::Sequential, out_s, weight, &cols, co, ckk, hw_out);
        }
    });
    out
}

/// Gradient of conv2d w.r.t. its input. `gout (n,co,ho,wo)` -> `(n,ci,h,w)`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_grad_input(
    par: Parallelism,
    gout: &[f32],
    weight: &[f32],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Vec<f32> {
    let ho = conv_out_dim(h, kh, stride, pad);
    let wo = conv_out_dim(w, kw, stride, pad);
    let ckk = ci * kh * kw;
    let hw_out = ho * wo;
    let mut gx = vec![0f32; n * ci * h * w];
    par::for_each_chunk_mut(par, &mut gx, SAMPLES_PER_TASK * ci * h * w, |task, gx_t| {
        let mut gcols = vec![0f32; ckk * hw_out];
        let s0 = task * SAMPLES_PER_TASK;
        for (ds, gx_s) in gx_t.chunks_mut(ci * h * w).enumerate() {
            let s = s0 + ds;
            gcols.fill(0.0);
            matmul_tn(
                Parallelism::Sequential,
                &mut gcols,
                weight,
                &gout[s * co * hw_out..(s + 1) * co * hw_out],
                ckk,
                co,
                hw_out,
            );
            col2im_sample(&gcols, gx_s, ci, h, w, kh, kw, stride, pad);
        }
    });
    gx
}

/// Samples handled per parallel task; amortizes the per-task cols buffer.
const SAMPLES_PER_TASK: usize = 8;

/// Sample-chunk size for the weight-gradient partial sums. A fixed constant
/// (not thread-count derived) keeps the reduction order identical between
/// sequential and parallel execution.
const GW_CHUNK: usize = 16;

/// Gradient of conv2d w.r.t. the weight. Returns `(co,ci,kh,kw)`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_grad_weight(
    par: Parallelism,
    x: &[f32],
    gout: &[f32],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Vec<f32> {
    let ho = conv_out_dim(h, kh, stride, pad);
    let wo = conv_out_dim(w, kw, stride, pad);
    let ckk = ci * kh * kw;
    let hw_out = ho * wo;
    let n_chunks = n.div_ceil(GW_CHUNK);
    let partials = par::map_indices(par, n_chunks, |chunk| {
        let mut gw = vec![0f32; co * ckk];
        let mut cols = vec![0f32; ckk * hw_out];
        let mut cols_t = vec![0f32; ckk * hw_out];
        let s0 = chunk * GW_CHUNK;
        let s1 = (s0 + GW_CHUNK).min(n);
        for s in s0..s1 {
            im2col_sample(&x[s * ci * h * w..(s + 1) * ci * h * w], &mut cols, ci, h, w, kh, kw, stride, pad);
            // gw (co, ckk) += gout_s (co, hw) @ cols^T; transposing cols lets
            // the tiled kernel stream it instead of taking short dots.
            transpose_blocked(&cols, &mut cols_t, ckk, hw_out);
            matmul_nn(
                Parallelism::Sequential,
                &mut gw,
                &gout[s * co * hw_out..(s + 1) * co * hw_out],
                &cols_t,
                co,
                hw_out,
                ckk,
            );
        }
        gw
    });
    let mut gw = vec![0f32; co * ckk];
    for p in partials {
        for (g, v) in gw.iter_mut().zip(p) {
            *g += v;
        }
    }
    gw
}

/// Depthwise conv2d forward: `x (n,c,h,w)`, `weight (c,1,k,k)` -> `(n,c,ho,wo)`.
#[allow(clippy::too_many_arguments)]
pub fn depthwise_conv2d_forward(
    par: Parallelism,
    x: &[f32],
    weight: &[f32],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Vec<f32> {
    let ho = conv_out_dim(h, k, stride, pad);
    let wo = conv_out_dim(w, k, stride, pad);
    let mut out = vec![0f32; n * c * ho * wo];
    par::for_each_chunk_mut(par, &mut out, ho * wo, |pc, out_p| {
        let ch = pc % c;
        let xin = &x[pc * h * w..(pc + 1) * h * w];
        let ker = &weight[ch * k * k..(ch + 1) * k * k];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = 0f32;
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        acc += ker[ky * k + kx] * xin[iy as usize * w + ix as usize];
                    }
                }
                out_p[oy * wo + ox] = acc;
            }
        }
    });
    out
}

/// Depthwise conv2d input gradient.
#[allow(clippy::too_many_arguments)]
pub fn depthwise_conv2d_grad_input(
    par: Parallelism,
    gout: &[f32],
    weight: &[f32],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Vec<f32> {
    let ho = conv_out_dim(h, k, stride, pad);
    let wo = conv_out_dim(w, k, stride, pad);
    let mut gx = vec![0f32; n * c * h * w];
    par::for_each_chunk_mut(par, &mut gx, h * w, |pc, gx_p| {
        let ch = pc % c;
        let g = &gout[pc * ho * wo..(pc + 1) * ho * wo];
        let ker = &weight[ch * k * k..(ch + 1) * k * k];
        for oy in 0..ho {
            for ox in 0..wo {
                let gv = g[oy * wo + ox];
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        gx_p[iy as usize * w + ix as usize] += gv * ker[ky * k + kx];
                    }
                }
            }
        }
    });
    gx
}

/// Depthwise conv2d weight gradient; returns `(c,1,k,k)` layout.
#[allow(clippy::too_many_arguments)]
pub fn depthwise_conv2d_grad_weight(
    par: Parallelism,
    x: &[f32],
    gout: &[f32],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Vec<f32> {
    let ho = conv_out_dim(h, k, stride, pad);
    let wo = conv_out_dim(w, k, stride, pad);
    let mut gw = vec![0f32; c * k * k];
    par::for_each_chunk_mut(par, &mut gw, k * k, |ch, gw_c| {
        // Samples accumulate in index order per channel.
        for s in 0..n {
            let xin = &x[(s * c + ch) * h * w..(s * c + ch + 1) * h * w];
            let g = &gout[(s * c + ch) * ho * wo..(s * c + ch + 1) * ho * wo];
            for oy in 0..ho {
                for ox in 0..wo {
                    let gv = g[oy * wo + ox];
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            gw_c[ky * k + kx] += gv * xin[iy as usize * w + ix as usize];
                        }
                    }
                }
            }
        }
    });
    gw
}

/// Max pooling forward; returns (output, argmax flat indices into the input).
#[allow(clippy::too_many_arguments)]
pub fn maxpool2d_forward(
    par: Parallelism,
    x: &[f32],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> (Vec<f32>, Vec<u32>) {
    let ho = conv_out_dim(h, k, stride, pad);
    let wo = conv_out_dim(w, k, stride, pad);
    let mut out = vec![0f32; n * c * ho * wo];
    let mut arg = vec![0u32; n * c * ho * wo];
    // Two passes keep each buffer single-writer per chunk; fill arg first.
    par::for_each_chunk_mut(par, &mut arg, ho * wo, |pc, arg_p| {
        let (s, ch) = (pc / c, pc % c);
        let base = (s * c + ch) * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = f32::NEG_INFINITY;
                let mut best_idx = 0usize;
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let idx = iy as usize * w + ix as usize;
                        let v = x[base + idx];
                        if v > best {
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                arg_p[oy * wo + ox] = best_idx as u32;
            }
        }
    });
    par::for_each_chunk_mut(par, &mut out, ho * wo, |pc, out_p| {
        let (s, ch) = (pc / c, pc % c);
        let base = (s * c + ch) * h * w;
        for (o, &a) in out_p.iter_mut().zip(&arg[pc * ho * wo..(pc + 1) * ho * wo]) {
            *o = x[base + a as usize];
        }
    });
    (out, arg)
}

/// Gaussian blur of every channel with a fixed odd-sized kernel, same padding.
#[allow(clippy::too_many_arguments)]
pub fn depthwise_blur(
    par: Parallelism,
    x: &[f32],
    kernel: &[f32],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
) -> Vec<f32> {
    assert_eq!(kernel.len(), k * k);
    assert_eq!(k % 2, 1, "blur kernel must be odd-sized");
    let pad = k / 2;
    let mut out = vec![0f32; n * c * h * w];
    par::for_each_chunk_mut(par, &mut out, h * w, |pc, out_p| {
        let base = pc * h * w;
        for oy in 0..h {
            for ox in 0..w {
                let mut acc = 0f32;
                for ky in 0..k {
                    let iy = oy as isize + ky as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = ox as isize + kx as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        acc += kernel[ky * k + kx] * x[base + iy as usize * w + ix as usize];
                    }
                }
                out_p[oy * w + ox] = acc;
            }
        }
    });
    out
}

/// Normalized 2-D Gaussian kernel (sums to 1, symmetric).
pub fn gaussian_kernel(size: usize, sigma: f32) -> Vec<f32> {
    assert!(size % 2 == 1 && size > 0);
    let half = (size / 2) as isize;
    let mut k = vec![0f32; size * size];
    let s2 = 2.0 * sigma * sigma;
    for y in 0..size {
        for x in 0..size {
            let dy = (y as isize - half) as f32;
            let dx = (x as isize - half) as f32;
            k[y * size + x] = (-(dx * dx + dy * dy) / s2).exp();
        }
    }
    let total = sum(&k);
    for v in k.iter_mut() {
        *v /= total;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_mm(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
        let mut c = vec![0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0f64;
                for p in 0..k {
                    s += a[i * k + p] as f64 * b[p * n + j] as f64;
                }
                c[i * n + j] = s as f32;
            }
        }
        c
    }

    fn fill(v: &mut [f32], seed: u64) {
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
        for x in v.iter_mut() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            *x = ((state >> 40) as f32 / (1u64 << 24) as f32) - 0.5;
        }
    }

    #[test]
    fn matmul_variants_match_naive() {
        let (m, k, n) = (7, 300, 523);
        let mut a = vec![0f32; m * k];
        let mut b = vec![0f32; k * n];
        fill(&mut a, 1);
        fill(&mut b, 2);
        let want = naive_mm(&a, &b, m, k, n);

        let mut c = vec![0f32; m * n];
        matmul_nn(Parallelism::auto(), &mut c, &a, &b, m, k, n);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-3, "{x} vs {y}");
        }

        // b transposed: store b as (n,k)
        let mut bt = vec![0f32; n * k];
        for p in 0..k {
            for j in 0..n {
                bt[j * k + p] = b[p * n + j];
            }
        }
        let mut c2 = vec![0f32; m * n];
        matmul_nt(Parallelism::auto(), &mut c2, &a, &bt, m, k, n);
        for (x, y) in c2.iter().zip(&want) {
            assert!((x - y).abs() < 1e-3);
        }

        // a transposed: store a as (k,m)
        let mut at = vec![0f32; k * m];
        for i in 0..m {
            for p in 0..k {
                at[p * m + i] = a[i * k + p];
            }
        }
        let mut c3 = vec![0f32; m * n];
        matmul_tn(Parallelism::auto(), &mut c3, &at, &b, m, k, n);
        for (x, y) in c3.iter().zip(&want) {
            assert!((x - y).abs() < 1e-3);
        }
    }

    #[test]
    fn parallel_matches_sequential_bitwise() {
        let (m, k, n) = (33, 129, 700);
        let mut a = vec![0f32; m * k];
        let mut b = vec![0f32; k * n];
        fill(&mut a, 3);
        fill(&mut b, 4);
        let mut c_seq = vec![0f32; m * n];
        let mut c_par = vec![0f32; m * n];
        matmul_nn(Parallelism::Sequential, &mut c_seq, &a, &b, m, k, n);
        matmul_nn(Parallelism::auto(), &mut c_par, &a, &b, m, k, n);
        assert_eq!(c_seq, c_par);

        let mut x = vec![0f32; 5 * 3 * 17 * 19];
        fill(&mut x, 5);
        let mut wgt = vec![0f32; 8 * 3 * 3 * 3];
        fill(&mut wgt, 6);
        let o_seq = conv2d_forward(Parallelism::Sequential, &x, &wgt, 5, 3, 17, 19, 8, 3, 3, 2, 1);
        let o_par = conv2d_forward(Parallelism::auto(), &x, &wgt, 5, 3, 17, 19, 8, 3, 3, 2, 1);
        assert_eq!(o_seq, o_par);

        let gw_seq = conv2d_grad_weight(Parallelism::Sequential, &x, &o_seq, 5, 3, 17, 19, 8, 3, 3, 2, 1);
        let gw_par = conv2d_grad_weight(Parallelism::auto(), &x, &o_par, 5, 3, 17, 19, 8, 3, 3, 2, 1);
        assert_eq!(gw_seq, gw_par);
    }

    #[test]
    fn gaussian_kernel_normalized_and_symmetric() {
        let k = gaussian_kernel(7, 3.0);
        assert!((sum(&k) - 1.0).abs() < 1e-6);
        for y in 0..7 {
            for x in 0..7 {
                assert_eq!(k[y * 7 + x], k[(6 - y) * 7 + (6 - x)]);
                assert_eq!(k[y * 7 + x], k[x * 7 + y]);
            }
        }
    }
}

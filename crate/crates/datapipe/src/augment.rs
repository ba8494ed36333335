//! The heavy augmentation pipeline: random resized crop, horizontal flip,
//! color jitter, random grayscale. Outputs stay in [0,1] at the input shape.

use crate::error::{DataError, Result};
use crate::sampleset::SampleSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tensorcore::{hash, par, Tensor};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AugmentationPolicy {
    pub enabled: bool,
    /// Random-resized-crop area scale range.
    pub crop_scale: (f32, f32),
    pub hflip_prob: f32,
    /// Probability of applying the color jitter block.
    pub jitter_prob: f32,
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
    pub hue: f32,
    pub grayscale_prob: f32,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self {
            enabled: true,
            crop_scale: (0.2, 1.0),
            hflip_prob: 0.5,
            jitter_prob: 0.8,
            brightness: 0.4,
            contrast: 0.4,
            saturation: 0.4,
            hue: 0.1,
            grayscale_prob: 0.2,
        }
    }
}

impl AugmentationPolicy {
    pub fn disabled() -> Self {
        Self { enabled: false, ..Default::default() }
    }
}

/// Deterministic per-image stream: (root, worker, epoch, index) fixes the
/// draw regardless of how work is distributed.
pub fn augment_rng(root_seed: u64, worker: u64, epoch: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(hash::derive_seed(root_seed, "augment", &[worker, epoch, index]))
}

fn luma(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

fn rgb_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        (((g - b) / d).rem_euclid(6.0)) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor() as i32 % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - f * s);
    let t = v * (1.0 - (1.0 - f) * s);
    match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

fn bilinear_crop_resize(src: &[f32], h: usize, w: usize, cy: usize, cx: usize, ch: usize, cw: usize, out: &mut [f32]) {
    // resize the (ch, cw) crop at (cy, cx) back to (h, w)
    for c in 0..3 {
        for y in 0..h {
            let fy = (y as f32 + 0.5) * ch as f32 / h as f32 - 0.5;
            let y0f = fy.floor();
            let y0 = (y0f.max(0.0) as usize).min(ch - 1);
            let y1 = (y0 + 1).min(ch - 1);
            let wy = (fy - y0f).clamp(0.0, 1.0);
            for x in 0..w {
                let fx = (x as f32 + 0.5) * cw as f32 / w as f32 - 0.5;
                let x0f = fx.floor();
                let x0 = (x0f.max(0.0) as usize).min(cw - 1);
                let x1 = (x0 + 1).min(cw - 1);
                let wx = (fx - x0f).clamp(0.0, 1.0);
                let px = |yy: usize, xx: usize| src[c * h * w + (cy + yy) * w + cx + xx];
                let top = px(y0, x0) * (1.0 - wx) + px(y0, x1) * wx;
                let bot = px(y1, x0) * (1.0 - wx) + px(y1, x1) * wx;
                out[c * h * w + y * w + x] = top * (1.0 - wy) + bot * wy;
            }
        }
    }
}

/// Augment one (3,h,w) image into a fresh buffer.
pub fn augment_image(src: &[f32], h: usize, w: usize, policy: &AugmentationPolicy, rng: &mut ChaCha8Rng) -> Vec<f32> {
    if !policy.enabled {
        return src.to_vec();
    }
    let hw = h * w;
    let mut img = vec![0f32; 3 * hw];

    // random resized crop
    let (lo, hi) = policy.crop_scale;
    let mut done = false;
    for _ in 0..10 {
        let scale = rng.random_range(lo..=hi);
        let area = scale * (hw as f32);
        let log_r = rng.random_range((0.75f32).ln()..(4.0f32 / 3.0).ln());
        let ratio = log_r.exp();
        let cw = ((area * ratio).sqrt().round() as usize).max(1);
        let ch = ((area / ratio).sqrt().round() as usize).max(1);
        if cw <= w && ch <= h {
            let cy = rng.random_range(0..=(h - ch));
            let cx = rng.random_range(0..=(w - cw));
            bilinear_crop_resize(src, h, w, cy, cx, ch, cw, &mut img);
            done = true;
            break;
        }
    }
    if !done {
        img.copy_from_slice(src);
    }

    // horizontal flip
    if rng.random_range(0.0f32..1.0) < policy.hflip_prob {
        for c in 0..3 {
            for y in 0..h {
                let row = &mut img[c * hw + y * w..c * hw + (y + 1) * w];
                row.reverse();
            }
        }
    }

    // color jitter
    if rng.random_range(0.0f32..1.0) < policy.jitter_prob {
        let fb = rng.random_range(1.0 - policy.brightness..=1.0 + policy.brightness);
        let fc = rng.random_range(1.0 - policy.contrast..=1.0 + policy.contrast);
        let fs = rng.random_range(1.0 - policy.saturation..=1.0 + policy.saturation);
        let dh = rng.random_range(-policy.hue..=policy.hue);

        for v in img.iter_mut() {
            *v *= fb;
        }
        let mut mean = 0f32;
        for i in 0..hw {
            mean += luma(img[i], img[hw + i], img[2 * hw + i]);
        }
        mean /= hw as f32;
        for v in img.iter_mut() {
            *v = (*v - mean) * fc + mean;
        }
        for i in 0..hw {
            let gray = luma(img[i], img[hw + i], img[2 * hw + i]);
            img[i] = gray + (img[i] - gray) * fs;
            img[hw + i] = gray + (img[hw + i] - gray) * fs;
            img[2 * hw + i] = gray + (img[2 * hw + i] - gray) * fs;
        }
        if dh != 0.0 {
            for i in 0..hw {
                let (r, g, b) = (img[i].clamp(0.0, 1.0), img[hw + i].clamp(0.0, 1.0), img[2 * hw + i].clamp(0.0, 1.0));
                let (hh, ss, vv) = rgb_to_hsv(r, g, b);
                let (r2, g2, b2) = hsv_to_rgb(hh + dh, ss, vv);
                img[i] = r2;
                img[hw + i] = g2;
                img[2 * hw + i] = b2;
            }
        }
    }

    // random grayscale
    if rng.random_range(0.0f32..1.0) < policy.grayscale_prob {
        for i in 0..hw {
            let gray = luma(img[i], img[hw + i], img[2 * hw + i]);
            img[i] = gray;
            img[hw + i] = gray;
            img[2 * hw + i] = gray;
        }
    }

    for v in img.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    img
}

/// Two independent augmented views of the same image.
pub fn two_views(
    src: &[f32],
    h: usize,
    w: usize,
    policy: &AugmentationPolicy,
    rng: &mut ChaCha8Rng,
) -> (Vec<f32>, Vec<f32>) {
    let a = augment_image(src, h, w, policy, rng);
    let b = augment_image(src, h, w, policy, rng);
    (a, b)
}

/// Assemble an augmented batch from set positions. Each image draws from its
/// own (seed, epoch, index) stream, so the result is independent of how the
/// work is parallelized.
pub fn augment_batch(
    set: &SampleSet,
    positions: &[usize],
    policy: &AugmentationPolicy,
    root_seed: u64,
    epoch: u64,
) -> Result<Tensor> {
    let (c, h, w) = set.dims();
    if c != 3 {
        return Err(DataError::Invalid(format!("augmentation expects 3 channels, got {c}")));
    }
    let chw = c * h * w;
    let mut out = vec![0f32; positions.len() * chw];
    par::for_each_chunk_mut(par::Parallelism::auto(), &mut out, chw, |i, dst| {
        let pos = positions[i];
        let mut rng = augment_rng(root_seed, 0, epoch, pos as u64);
        let img = augment_image(set.image(pos), h, w, policy, &mut rng);
        dst.copy_from_slice(&img);
    });
    Ok(Tensor::new(vec![positions.len(), c, h, w], out)?)
}

/// Assemble two independently augmented views per position (contrastive
/// training). Both views of image i come from stream (seed, 0, epoch, i).
pub fn augment_batch_two_views(
    set: &SampleSet,
    positions: &[usize],
    policy: &AugmentationPolicy,
    root_seed: u64,
    epoch: u64,
) -> Result<(Tensor, Tensor)> {
    let (c, h, w) = set.dims();
    if c != 3 {
        return Err(DataError::Invalid(format!("augmentation expects 3 channels, got {c}")));
    }
    let chw = c * h * w;
    let views = par::map_indices(par::Parallelism::auto(), positions.len(), |i| {
        let pos = positions[i];
        let mut rng = augment_rng(root_seed, 0, epoch, pos as u64);
        two_views(set.image(pos), h, w, policy, &mut rng)
    });
    let mut a = vec![0f32; positions.len() * chw];
    let mut b = vec![0f32; positions.len() * chw];
    for (i, (va, vb)) in views.into_iter().enumerate() {
        a[i * chw..(i + 1) * chw].copy_from_slice(&va);
        b[i * chw..(i + 1) * chw].copy_from_slice(&vb);
    }
    Ok((
        Tensor::new(vec![positions.len(), c, h, w], a)?,
        Tensor::new(vec![positions.len(), c, h, w], b)?,
    ))
}

/// Exact 90-degree rotations (k quarter turns clockwise); lossless index
/// permutation, square inputs only.
pub fn rotate90(img: &[f32], c: usize, h: usize, w: usize, k: usize) -> Result<Vec<f32>> {
    if h != w {
        return Err(DataError::NonSquare(h, w));
    }
    let k = k % 4;
    if k == 0 {
        return Ok(img.to_vec());
    }
    let hw = h * w;
    let mut out = vec![0f32; img.len()];
    for ci in 0..c {
        for y in 0..h {
            for x in 0..w {
                // one clockwise quarter turn: (y, x) <- (h-1-x, y)
                let (sy, sx) = match k {
                    1 => (h - 1 - x, y),
                    2 => (h - 1 - y, w - 1 - x),
                    _ => (x, w - 1 - y),
                };
                out[ci * hw + y * w + x] = img[ci * hw + sy * w + sx];
            }
        }
    }
    Ok(out)
}

//! SGD with momentum and the linear learning-rate schedule.

use crate::error::{Result, TensorError};

/// One SGD-with-momentum update on a single parameter buffer:
/// `v <- momentum*v + g + weight_decay*w; w <- w - lr*v`.
/// The caller is responsible for zeroing the gradient afterwards.
pub fn sgd_momentum_update(
    w: &mut [f32],
    g: &[f32],
    v: &mut [f32],
    lr: f32,
    momentum: f32,
    weight_decay: f32,
) -> Result<()> {
    if lr <= 0.0 {
        return Err(TensorError::InvalidConfig(format!("learning rate must be positive, got {lr}")));
    }
    debug_assert_eq!(w.len(), g.len());
    debug_assert_eq!(w.len(), v.len());
    for i in 0..w.len() {
        v[i] = momentum * v[i] + g[i] + weight_decay * w[i];
        w[i] -= lr * v[i];
    }
    Ok(())
}

/// Linear learning-rate schedule, exact at both endpoints:
/// `lr(e) = start + (end - start) * e / (epochs - 1)`.
#[derive(Debug, Clone, Copy)]
pub struct LinearLr {
    pub start: f32,
    pub end: f32,
    pub epochs: usize,
}

impl LinearLr {
    pub fn new(start: f32, end: f32, epochs: usize) -> Result<Self> {
        if epochs == 0 {
            return Err(TensorError::InvalidConfig("schedule needs at least one epoch".into()));
        }
        if start <= 0.0 || end <= 0.0 {
            return Err(TensorError::InvalidConfig(format!(
                "schedule endpoints must be positive, got {start}..{end}"
            )));
        }
        Ok(Self { start, end, epochs })
    }

    pub fn at(&self, epoch: usize) -> f32 {
        if self.epochs == 1 {
            return self.start;
        }
        self.start + (self.end - self.start) * epoch as f32 / (self.epochs - 1) as f32
    }
}

/// Half-cosine schedule used for target-model training.
#[derive(Debug, Clone, Copy)]
pub struct CosineLr {
    pub start: f32,
    pub epochs: usize,
}

impl CosineLr {
    pub fn at(&self, epoch: usize) -> f32 {
        if self.epochs <= 1 {
            return self.start;
        }
        let t = epoch as f32 / (self.epochs - 1) as f32;
        0.5 * self.start * (1.0 + (std::f32::consts::PI * t).cos())
    }
}

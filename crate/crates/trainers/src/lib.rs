//! Surrogate training objectives (supervised, contrastive, rotation) and
//! desk-scale target-model training.

pub mod contrastive;
pub mod error;
pub mod history;
pub mod rotation;
pub mod supervised;
pub mod target;

pub use contrastive::train_contrastive;
pub use error::{Result, TrainError};
pub use history::{EpochStats, TrainHistory};
pub use rotation::train_rotation;
pub use supervised::{evaluate_top1, train_supervised};
pub use target::{train_target, TargetTrainConfig};

use serde::{Deserialize, Serialize};

/// Surrogate training configuration. Defaults follow the training protocol
/// the attacks assume: batch 128, 500 epochs, lr 0.4 linearly down to
/// 0.008, heavy augmentation, temperature 0.5 for the contrastive loss.
/// The optimizer is SGD with momentum, inferred from the lr magnitude and
/// kept visible here rather than hard-coded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_start: f32,
    pub lr_end: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    /// Contrastive softmax temperature.
    pub temperature: f32,
    pub seed: u64,
    pub augmentation: datapipe::AugmentationPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 500,
            lr_start: 0.4,
            lr_end: 0.008,
            momentum: 0.9,
            weight_decay: 5e-4,
            temperature: 0.5,
            seed: 0,
            augmentation: datapipe::AugmentationPolicy::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.lr_start >= self.lr_end && self.lr_end > 0.0) {
            return Err(TrainError::InvalidConfig(format!(
                "schedule must satisfy lr_start >= lr_end > 0, got {}..{}",
                self.lr_start, self.lr_end
            )));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<tensorcore::optim::LinearLr> {
        Ok(tensorcore::optim::LinearLr::new(self.lr_start, self.lr_end, self.epochs)?)
    }
}

/// Deterministic epoch shuffle of sample positions.
pub(crate) fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(tensorcore::hash::derive_seed(
        seed,
        "shuffle",
        &[epoch as u64],
    ));
    order.shuffle(&mut rng);
    order
}

pub(crate) fn argmax_rows(data: &[f32], classes: usize) -> Vec<u32> {
    data.chunks(classes)
        .map(|row| {
            let mut best = 0usize;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best as u32
        })
        .collect()
}

//! Desk-scale target-model training for the evaluation bench.

use crate::error::{Result, TrainError};
use crate::history::{EpochStats, TrainHistory};
use crate::supervised::evaluate_top1;
use crate::{argmax_rows, epoch_order};
use datapipe::{augment_batch, AugmentationPolicy, FewShotManifest, SampleSet};
use nets::{Model, NetworkSpec};
use serde::{Deserialize, Serialize};
use tensorcore::optim::CosineLr;
use tensorcore::Tape;

/// Target training is plumbing: targets only need well-trained status.
/// Light crop/flip augmentation, cosine learning rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetTrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    /// Optional subset size of the train split (uniform, seeded) to keep
    /// CPU budgets sane.
    pub subset: Option<usize>,
    pub seed: u64,
}

impl Default for TargetTrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 60,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            subset: None,
            seed: 0,
        }
    }
}

fn light_augmentation() -> AugmentationPolicy {
    AugmentationPolicy {
        enabled: true,
        crop_scale: (0.8, 1.0),
        hflip_prob: 0.5,
        jitter_prob: 0.0,
        brightness: 0.0,
        contrast: 0.0,
        saturation: 0.0,
        hue: 0.0,
        grayscale_prob: 0.0,
    }
}

/// Train a target model on (a subset of) the labeled train split. Refuses
/// to run when the data overlaps the attacker's few-shot manifest.
pub fn train_target(
    spec: &NetworkSpec,
    train_split: &SampleSet,
    test_split: &SampleSet,
    cfg: &TargetTrainConfig,
    few_shot: Option<&FewShotManifest>,
) -> Result<(Model, TrainHistory, f32)> {
    let data = match cfg.subset {
        Some(n) if n < train_split.len() => {
            datapipe::sample_few_shot(train_split, datapipe::FewShotSize::Total(n), cfg.seed)?
        }
        _ => train_split.clone(),
    };
    if let Some(manifest) = few_shot {
        if data.provenance.overlaps(&manifest.to_provenance()) {
            return Err(TrainError::ProvenanceOverlap(format!(
                "{}:{} intersects the few-shot manifest",
                data.provenance.dataset, data.provenance.split
            )));
        }
    }
    let labels_all = data.labels.as_ref().ok_or(TrainError::MissingLabels)?.clone();
    let mut model = Model::build(spec, cfg.seed)?;
    let schedule = CosineLr { start: cfg.lr, epochs: cfg.epochs };
    let policy = light_augmentation();
    let n = data.len();
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        let lr = schedule.at(epoch).max(1e-5);
        let order = epoch_order(n, cfg.seed, epoch);
        let mut loss_sum = 0f64;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let x = augment_batch(&data, chunk, &policy, cfg.seed, epoch as u64)?;
            let labels: Vec<u32> = chunk.iter().map(|&p| labels_all[p]).collect();
            let mut tape = Tape::new();
            let xv = tape.constant(x);
            let bound = model.forward_train(&mut tape, xv, None)?;
            let loss = tape.softmax_cross_entropy(bound.out, &labels)?;
            let loss_val = tape.value(loss).item()?;
            if !loss_val.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, step });
            }
            let preds = argmax_rows(tape.value(bound.out).data(), spec.num_classes);
            correct += preds.iter().zip(&labels).filter(|(p, l)| p == l).count();
            seen += labels.len();
            loss_sum += loss_val as f64 * labels.len() as f64;

            tape.backward(loss)?;
            model.store.accumulate_grads(&tape, &bound.bindings);
            model.store.sgd_momentum_step(lr, cfg.momentum, cfg.weight_decay)?;
        }
        model.store.meta.epoch = (epoch + 1) as u32;
        history.push(EpochStats {
            epoch,
            lr,
            loss: (loss_sum / seen as f64) as f32,
            acc: 100.0 * correct as f32 / seen as f32,
        });
    }
    let clean_test = evaluate_top1(&model, test_split, cfg.batch_size)?;
    Ok((model, history, clean_test))
}

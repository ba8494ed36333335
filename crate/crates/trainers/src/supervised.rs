//! Supervised cross-entropy training on the few-shot set.

use crate::error::{Result, TrainError};
use crate::history::{EpochStats, TrainHistory};
use crate::{argmax_rows, epoch_order, TrainConfig};
use datapipe::{augment_batch, SampleSet};
use nets::Model;
use tensorcore::Tape;

/// Minimize mean cross-entropy over augmented few-shot batches.
/// Accuracy in the history is measured on the augmented training batches.
pub fn train_supervised(model: &mut Model, few_shot: &SampleSet, cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    let labels_all = few_shot.labels.as_ref().ok_or(TrainError::MissingLabels)?.clone();
    let schedule = cfg.schedule()?;
    let n = few_shot.len();
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        let lr = schedule.at(epoch);
        let order = epoch_order(n, cfg.seed, epoch);
        let mut loss_sum = 0f64;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let x = augment_batch(few_shot, chunk, &cfg.augmentation, cfg.seed, epoch as u64)?;
            let labels: Vec<u32> = chunk.iter().map(|&p| labels_all[p]).collect();
            let mut tape = Tape::new();
            let xv = tape.constant(x);
            let bound = model.forward_train(&mut tape, xv, None)?;
            let loss = tape.softmax_cross_entropy(bound.out, &labels)?;
            let loss_val = tape.value(loss).item()?;
            if !loss_val.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, step });
            }
            let preds = argmax_rows(tape.value(bound.out).data(), model.spec.num_classes);
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
    Ok(history)
}

/// Clean top-1 accuracy of an eval-mode model on a labeled set (percent).
pub fn evaluate_top1(model: &Model, set: &SampleSet, batch_size: usize) -> Result<f32> {
    let labels = set.labels.as_ref().ok_or(TrainError::MissingLabels)?;
    if set.is_empty() {
        return Err(TrainError::InvalidConfig("cannot evaluate on an empty set".into()));
    }
    let (c, h, w) = set.dims();
    let chw = c * h * w;
    let mut correct = 0usize;
    let positions: Vec<usize> = (0..set.len()).collect();
    for chunk in positions.chunks(batch_size.max(1)) {
        let mut data = Vec::with_capacity(chunk.len() * chw);
        for &p in chunk {
            data.extend_from_slice(set.image(p));
        }
        let mut tape = Tape::new();
        let xv = tape.constant(tensorcore::Tensor::new(vec![chunk.len(), c, h, w], data)?);
        let logits = model.forward_logits(&mut tape, xv)?;
        let preds = argmax_rows(tape.value(logits).data(), model.spec.num_classes);
        correct += chunk.iter().zip(&preds).filter(|(&p, &pred)| labels[p] == pred).count();
    }
    Ok(100.0 * correct as f32 / set.len() as f32)
}

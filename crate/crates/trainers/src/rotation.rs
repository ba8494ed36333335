//! Rotation-pretext training: 4-way classification of quarter turns.

use crate::error::{Result, TrainError};
use crate::history::{EpochStats, TrainHistory};
use crate::{argmax_rows, epoch_order, TrainConfig};
use datapipe::{augment_image, augment_rng, rotate90, SampleSet};
use nets::Model;
use tensorcore::{hash, Tape, Tensor};

/// Train a 4-way rotation classifier over augmented, rotated few-shot
/// images. Labels in the set are ignored; the pretext label is k in
/// rotate90(x, k).
pub fn train_rotation(model: &mut Model, few_shot: &SampleSet, cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    if model.spec.num_classes != 4 {
        return Err(TrainError::WrongHead(model.spec.num_classes));
    }
    let (c, h, w) = few_shot.dims();
    if h != w {
        return Err(TrainError::Data(datapipe::DataError::NonSquare(h, w)));
    }
    let schedule = cfg.schedule()?;
    let n = few_shot.len();
    let chw = c * h * w;
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        let lr = schedule.at(epoch);
        let order = epoch_order(n, cfg.seed, epoch);
        let mut loss_sum = 0f64;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut data = vec![0f32; chunk.len() * chw];
            let mut ks = vec![0u32; chunk.len()];
            for (i, &pos) in chunk.iter().enumerate() {
                let mut rng = augment_rng(cfg.seed, 0, epoch as u64, pos as u64);
                let aug = augment_image(few_shot.image(pos), h, w, &cfg.augmentation, &mut rng);
                let k = (hash::derive_seed(cfg.seed, "rot-k", &[epoch as u64, pos as u64]) % 4) as usize;
                ks[i] = k as u32;
                let rotated = rotate90(&aug, c, h, w, k)?;
                data[i * chw..(i + 1) * chw].copy_from_slice(&rotated);
            }
            let mut tape = Tape::new();
            let xv = tape.constant(Tensor::new(vec![chunk.len(), c, h, w], data)?);
            let bound = model.forward_train(&mut tape, xv, None)?;
            let loss = tape.softmax_cross_entropy(bound.out, &ks)?;
            let loss_val = tape.value(loss).item()?;
            if !loss_val.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, step });
            }
            let preds = argmax_rows(tape.value(bound.out).data(), 4);
            correct += preds.iter().zip(&ks).filter(|(p, k)| p == k).count();
            seen += ks.len();
            loss_sum += loss_val as f64 * ks.len() as f64;

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

/// Rotation-pretext accuracy on augmented data (for post-training checks).
pub fn rotation_accuracy(model: &Model, few_shot: &SampleSet, cfg: &TrainConfig, epoch: u64) -> Result<f32> {
    let (c, h, w) = few_shot.dims();
    let chw = c * h * w;
    let positions: Vec<usize> = (0..few_shot.len()).collect();
    let mut correct = 0usize;
    for chunk in positions.chunks(cfg.batch_size) {
        let mut data = vec![0f32; chunk.len() * chw];
        let mut ks = vec![0u32; chunk.len()];
        for (i, &pos) in chunk.iter().enumerate() {
            let mut rng = augment_rng(cfg.seed, 1, epoch, pos as u64);
            let aug = augment_image(few_shot.image(pos), h, w, &cfg.augmentation, &mut rng);
            let k = (hash::derive_seed(cfg.seed, "rot-k-eval", &[epoch, pos as u64]) % 4) as usize;
            ks[i] = k as u32;
            let rotated = rotate90(&aug, c, h, w, k)?;
            data[i * chw..(i + 1) * chw].copy_from_slice(&rotated);
        }
        let mut tape = Tape::new();
        let xv = tape.constant(Tensor::new(vec![chunk.len(), c, h, w], data)?);
        let logits = model.forward_logits(&mut tape, xv)?;
        let preds = argmax_rows(tape.value(logits).data(), 4);
        correct += preds.iter().zip(&ks).filter(|(p, k)| p == k).count();
    }
    Ok(100.0 * correct as f32 / few_shot.len() as f32)
}

//! Contrastive surrogate training: InfoNCE over two augmented views.
//!
//! The loss for row i is the softmax cross-entropy of the similarity row
//! `cos(z_i, z'_j) / t` against the positive at j == i, i.e.
//! `-log( exp(cos(z_i, z_i+)/t) / sum_j exp(cos(z_i, z'_j)/t) )`,
//! with the other batch elements' second views as negatives.

use crate::error::{Result, TrainError};
use crate::history::{EpochStats, TrainHistory};
use crate::{epoch_order, TrainConfig};
use datapipe::{augment_batch_two_views, SampleSet};
use nets::{Model, ParameterStore, StoreMeta, TruncationPoint};
use tensorcore::{Tape, Var};

/// Two-layer projection head applied to pooled backbone features and
/// discarded after training; the attacked feature extractor is the backbone.
pub struct ProjectionHead {
    pub store: ParameterStore,
    pub dims: (usize, usize, usize),
}

impl ProjectionHead {
    pub fn build(input_dim: usize, seed: u64) -> Result<Self> {
        let hidden = (input_dim / 2).max(16);
        let out = (input_dim / 4).max(16);
        let mut store = ParameterStore::new(StoreMeta { spec_hash: 0, seed, epoch: 0 });
        use rand::SeedableRng;
        use rand_distr::Distribution;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(tensorcore::hash::derive_seed(
            seed,
            "projection-head",
            &[],
        ));
        let mut linear = |store: &mut ParameterStore, name: &str, d_in: usize, d_out: usize| -> Result<()> {
            let dist = rand_distr::Normal::new(0.0f32, (2.0 / d_in as f32).sqrt()).expect("std > 0");
            let data: Vec<f32> = (0..d_out * d_in).map(|_| dist.sample(&mut rng)).collect();
            store.add(&format!("{name}.w"), tensorcore::Tensor::new(vec![d_out, d_in], data)?, true)?;
            store.add(&format!("{name}.b"), tensorcore::Tensor::zeros(vec![d_out]), true)?;
            Ok(())
        };
        linear(&mut store, "fc1", input_dim, hidden)?;
        linear(&mut store, "fc2", hidden, out)?;
        Ok(Self { store, dims: (input_dim, hidden, out) })
    }

    fn forward(&self, tape: &mut Tape, x: Var, bindings: &[(usize, Var)]) -> Result<Var> {
        let var_of = |name: &str| -> Result<Var> {
            let i = self.store.idx(name)?;
            Ok(bindings.iter().find(|(j, _)| *j == i).expect("bound").1)
        };
        let h = tape.linear(x, var_of("fc1.w")?, Some(var_of("fc1.b")?))?;
        let h = tape.relu(h)?;
        Ok(tape.linear(h, var_of("fc2.w")?, Some(var_of("fc2.b")?))?)
    }
}

/// InfoNCE loss between two batches of l2-normalized projections.
/// Returns the scalar loss var; exposed for direct unit verification.
pub fn info_nce(tape: &mut Tape, z1: Var, z2: Var, temperature: f32) -> Result<Var> {
    let (b, _) = tape.value(z1).dims2()?;
    if b < 2 {
        return Err(TrainError::BatchTooSmall);
    }
    let sims = tape.matmul_nt(z1, z2)?; // (b, b) cosine matrix of unit rows
    let scaled = tape.scale(sims, 1.0 / temperature)?;
    let labels: Vec<u32> = (0..b as u32).collect();
    Ok(tape.softmax_cross_entropy(scaled, &labels)?)
}

/// Train the backbone (plus a throwaway projection head) contrastively.
/// Labels in the few-shot set are ignored.
pub fn train_contrastive(model: &mut Model, few_shot: &SampleSet, cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    if few_shot.len() < 2 {
        return Err(TrainError::BatchTooSmall);
    }
    let pooled_dim = *model.spec.stage_widths().last().unwrap();
    let mut head = ProjectionHead::build(pooled_dim, cfg.seed)?;
    let schedule = cfg.schedule()?;
    let n = few_shot.len();
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        let lr = schedule.at(epoch);
        let order = epoch_order(n, cfg.seed, epoch);
        let mut loss_sum = 0f64;
        let mut seen = 0usize;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue; // a trailing singleton has no negatives
            }
            let (x1, x2) = augment_batch_two_views(few_shot, chunk, &cfg.augmentation, cfg.seed, epoch as u64)?;
            let mut tape = Tape::new();
            let x1v = tape.constant(x1);
            let x2v = tape.constant(x2);
            let b1 = model.forward_train(&mut tape, x1v, Some(TruncationPoint::Pool))?;
            let b2 = model.forward_train(&mut tape, x2v, Some(TruncationPoint::Pool))?;
            let head_bindings = head.store.bind_all(&mut tape, true);
            let p1 = head.forward(&mut tape, b1.out, &head_bindings)?;
            let p2 = head.forward(&mut tape, b2.out, &head_bindings)?;
            let z1 = tape.l2_normalize(p1)?;
            let z2 = tape.l2_normalize(p2)?;
            let loss = info_nce(&mut tape, z1, z2, cfg.temperature)?;
            let loss_val = tape.value(loss).item()?;
            if !loss_val.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, step });
            }
            loss_sum += loss_val as f64 * chunk.len() as f64;
            seen += chunk.len();

            tape.backward(loss)?;
            model.store.accumulate_grads(&tape, &b1.bindings);
            model.store.accumulate_grads(&tape, &b2.bindings);
            head.store.accumulate_grads(&tape, &head_bindings);
            model.store.sgd_momentum_step(lr, cfg.momentum, cfg.weight_decay)?;
            head.store.sgd_momentum_step(lr, cfg.momentum, cfg.weight_decay)?;
        }
        model.store.meta.epoch = (epoch + 1) as u32;
        // No label accuracy in the unsupervised objective; the field stays 0.
        history.push(EpochStats { epoch, lr, loss: (loss_sum / seen.max(1) as f64) as f32, acc: 0.0 });
    }
    Ok(history)
}

//! Guide-image selection: a differently labeled image whose shallow
//! features the adversarial example is pushed toward.

use crate::config::GuideStrategy;
use crate::error::{AttackError, Result};
use datapipe::SampleSet;
use nets::{Model, TruncationPoint};
use tensorcore::{hash, kernels, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Flattened eval-mode features for every pool image, row per sample.
fn pool_features(model: &Model, pool: &SampleSet, at: TruncationPoint, batch: usize) -> Result<Vec<Vec<f32>>> {
    let (c, h, w) = pool.dims();
    let chw = c * h * w;
    let mut rows: Vec<Vec<f32>> = Vec::with_capacity(pool.len());
    let positions: Vec<usize> = (0..pool.len()).collect();
    for chunk in positions.chunks(batch) {
        let mut data = Vec::with_capacity(chunk.len() * chw);
        for &p in chunk {
            data.extend_from_slice(pool.image(p));
        }
        let mut tape = Tape::new();
        let xv = tape.constant(Tensor::new(vec![chunk.len(), c, h, w], data)?);
        let f = model.forward_features(&mut tape, xv, at)?;
        let numel: usize = tape.value(f).shape()[1..].iter().product();
        let fd = tape.value(f).data();
        for i in 0..chunk.len() {
            rows.push(fd[i * numel..(i + 1) * numel].to_vec());
        }
    }
    Ok(rows)
}

/// Pick one guide for a source. `random-diff-label` draws uniformly over
/// other-class samples from the (seed, source) stream; `feature-far` takes
/// the other-class sample with maximal feature mse under the surrogate.
pub fn select_guide(
    source_idx: usize,
    pool: &SampleSet,
    strategy: GuideStrategy,
    surrogate: Option<(&Model, TruncationPoint)>,
    seed: u64,
) -> Result<usize> {
    let guides = select_guides(&[source_idx], pool, strategy, surrogate, seed)?;
    Ok(guides[0])
}

/// Batched guide selection for many sources against one pool.
pub fn select_guides(
    sources: &[usize],
    pool: &SampleSet,
    strategy: GuideStrategy,
    surrogate: Option<(&Model, TruncationPoint)>,
    seed: u64,
) -> Result<Vec<usize>> {
    let labels = pool.labels.as_ref().ok_or(AttackError::MissingLabels)?;
    let features = match strategy {
        GuideStrategy::FeatureFar => {
            let (model, at) =
                surrogate.ok_or_else(|| AttackError::InvalidConfig("feature-far needs a surrogate".into()))?;
            Some(pool_features(model, pool, at, 100)?)
        }
        GuideStrategy::RandomDiffLabel => None,
    };
    let mut out = Vec::with_capacity(sources.len());
    for &s in sources {
        let src_label = labels[s];
        let candidates: Vec<usize> =
            (0..pool.len()).filter(|&i| labels[i] != src_label).collect();
        if candidates.is_empty() {
            return Err(AttackError::SingleClassPool);
        }
        let pick = match (&strategy, &features) {
            (GuideStrategy::RandomDiffLabel, _) => {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(hash::derive_seed(seed, "guide", &[s as u64]));
                candidates[rng.random_range(0..candidates.len())]
            }
            (GuideStrategy::FeatureFar, Some(rows)) => {
                let src = &rows[s];
                let mut best = candidates[0];
                let mut best_d = f32::NEG_INFINITY;
                for &c in &candidates {
                    let other = &rows[c];
                    let mut diff: Vec<f32> = Vec::with_capacity(src.len());
                    for (a, b) in src.iter().zip(other) {
                        diff.push(a - b);
                    }
                    let d = kernels::dot(&diff, &diff) / src.len() as f32;
                    if d > best_d {
                        best_d = d;
                        best = c;
                    }
                }
                best
            }
            _ => unreachable!(),
        };
        out.push(pick);
    }
    Ok(out)
}

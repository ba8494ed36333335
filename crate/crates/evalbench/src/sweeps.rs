//! Sample-count and layer sweeps.

use crate::error::{BenchError, Result};
use crate::matrix::{run_matrix, LabeledAttack, MatrixJob};
use crate::registry::TargetRegistry;
use attackkit::{select_guides, AttackConfig, GuideStrategy, InnerSpace, LossSurface};
use datapipe::{manifest_for, sample_few_shot, FewShotSize, SampleSet};
use nets::{Model, NetworkSpec, TruncationPoint};
use serde::{Deserialize, Serialize};
use trainers::{train_supervised, TrainConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint<K> {
    pub at: K,
    pub avg_adv_acc: f32,
}

fn pick_guides(
    sources: &SampleSet,
    surrogate: &Model,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<Vec<usize>> {
    let all: Vec<usize> = (0..sources.len()).collect();
    Ok(select_guides(
        &all,
        sources,
        cfg.guide,
        match cfg.guide {
            GuideStrategy::FeatureFar => Some((surrogate, cfg.truncation)),
            GuideStrategy::RandomDiffLabel => None,
        },
        seed,
    )?)
}

/// Train one surrogate per sample count (shared seed), attack its own
/// few-shot set, and record the cross-target average accuracy.
#[allow(clippy::too_many_arguments)]
pub fn sweep_samples(
    pool: &SampleSet,
    registry: &TargetRegistry,
    spec: &NetworkSpec,
    train_cfg: &TrainConfig,
    attack_cfg: &AttackConfig,
    seeds: &[u64],
    ns: &[usize],
    out_dir: Option<&std::path::Path>,
) -> Result<Vec<SweepPoint<usize>>> {
    let mut seen = std::collections::BTreeSet::new();
    for &n in ns {
        if !seen.insert(n) {
            return Err(BenchError::DuplicateSweepPoint(n.to_string()));
        }
    }
    let mut points = Vec::with_capacity(ns.len());
    for &n in ns {
        let few_shot = sample_few_shot(pool, FewShotSize::Total(n), train_cfg.seed)?;
        let manifest = manifest_for(&few_shot, train_cfg.seed);
        let mut surrogate = Model::build(spec, train_cfg.seed)?;
        train_supervised(&mut surrogate, &few_shot, train_cfg)?;
        let guides = pick_guides(&few_shot, &surrogate, attack_cfg, attack_cfg.seed)?;
        let report = run_matrix(&MatrixJob {
            surrogate: &surrogate,
            sources: &few_shot,
            guide_pool: &few_shot,
            guides,
            registry,
            attacks: vec![LabeledAttack {
                label: format!("n{n}"),
                config: attack_cfg.clone(),
                inner_space: InnerSpace::Feature,
            }],
            seeds: seeds.to_vec(),
            few_shot: Some(&manifest),
            out_dir: out_dir.map(|d| d.join(format!("samples-n{n}"))),
        })?;
        points.push(SweepPoint { at: n, avg_adv_acc: report.averages[0].1 });
    }
    Ok(points)
}

/// One attack run per truncation point over a shared surrogate, plus a
/// deep-surface reference row for the fc comparison.
pub struct LayerSweepOutcome {
    pub points: Vec<SweepPoint<TruncationPoint>>,
    pub deep_reference: f32,
}

#[allow(clippy::too_many_arguments)]
pub fn sweep_layers(
    surrogate: &Model,
    few_shot: &SampleSet,
    few_shot_manifest: &datapipe::FewShotManifest,
    registry: &TargetRegistry,
    attack_cfg: &AttackConfig,
    seeds: &[u64],
    truncations: &[TruncationPoint],
    out_dir: Option<&std::path::Path>,
) -> Result<LayerSweepOutcome> {
    let mut seen = std::collections::BTreeSet::new();
    for &t in truncations {
        if !seen.insert(t.ordinal()) {
            return Err(BenchError::DuplicateSweepPoint(t.to_string()));
        }
        if !surrogate.supports(t) {
            return Err(BenchError::Invalid(format!("surrogate does not expose truncation {t}")));
        }
    }
    let guides = pick_guides(few_shot, surrogate, attack_cfg, attack_cfg.seed)?;

    let mut attacks: Vec<LabeledAttack> = truncations
        .iter()
        .map(|&t| {
            let mut cfg = attack_cfg.clone();
            cfg.truncation = t;
            LabeledAttack { label: format!("layer-{t}"), config: cfg, inner_space: InnerSpace::Feature }
        })
        .collect();
    let mut deep_cfg = AttackConfig::new(LossSurface::Deep, attack_cfg.method, attack_cfg.eps);
    deep_cfg.steps = attack_cfg.steps;
    deep_cfg.norm = attack_cfg.norm;
    deep_cfg.batch_size = attack_cfg.batch_size;
    attacks.push(LabeledAttack { label: "deep-reference".into(), config: deep_cfg, inner_space: InnerSpace::Feature });

    let report = run_matrix(&MatrixJob {
        surrogate,
        sources: few_shot,
        guide_pool: few_shot,
        guides,
        registry,
        attacks,
        seeds: seeds.to_vec(),
        few_shot: Some(few_shot_manifest),
        out_dir: out_dir.map(|d| d.join("layers")),
    })?;
    let points = truncations
        .iter()
        .map(|&t| SweepPoint { at: t, avg_adv_acc: report.average_of(&format!("layer-{t}")).unwrap() })
        .collect();
    Ok(LayerSweepOutcome { points, deep_reference: report.average_of("deep-reference").unwrap() })
}

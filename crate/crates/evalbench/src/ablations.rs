//! Ablation rows: augmentation on/off, training objective, weight- vs
//! feature-space inner max, etf vs etf-all, and the l2 norm variant.

use crate::error::Result;
use crate::matrix::{run_matrix, EvaluationReport, LabeledAttack, MatrixJob};
use crate::registry::TargetRegistry;
use attackkit::{l2_eps_for, select_guides, AttackConfig, GuideStrategy, InnerSpace, LossSurface, NormKind};
use datapipe::{FewShotManifest, SampleSet};
use nets::{Model, NetworkSpec};
use serde::{Deserialize, Serialize};
use trainers::{train_contrastive, train_rotation, train_supervised, TrainConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub avg_adv_acc: f32,
    pub std: Option<f32>,
    pub per_target: Vec<(String, f32)>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, label: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

pub struct AblationContext<'a> {
    pub few_shot: &'a SampleSet,
    pub few_shot_manifest: &'a FewShotManifest,
    pub registry: &'a TargetRegistry,
    pub surrogate_spec: &'a NetworkSpec,
    pub train_cfg: &'a TrainConfig,
    /// Base etf attack configuration (feature space, l-inf).
    pub attack_cfg: &'a AttackConfig,
    pub seeds: &'a [u64],
    pub out_dir: Option<std::path::PathBuf>,
    /// The trained baseline surrogate (supervised, augmented).
    pub baseline: &'a Model,
}

fn one_row(
    ctx: &AblationContext,
    label: &str,
    surrogate: &Model,
    cfg: &AttackConfig,
    inner_space: InnerSpace,
) -> Result<AblationRow> {
    let all: Vec<usize> = (0..ctx.few_shot.len()).collect();
    let guides = select_guides(
        &all,
        ctx.few_shot,
        cfg.guide,
        match cfg.guide {
            GuideStrategy::FeatureFar => Some((surrogate, cfg.truncation)),
            GuideStrategy::RandomDiffLabel => None,
        },
        cfg.seed,
    )?;
    let report: EvaluationReport = run_matrix(&MatrixJob {
        surrogate,
        sources: ctx.few_shot,
        guide_pool: ctx.few_shot,
        guides,
        registry: ctx.registry,
        attacks: vec![LabeledAttack { label: label.to_string(), config: cfg.clone(), inner_space }],
        seeds: ctx.seeds.to_vec(),
        few_shot: Some(ctx.few_shot_manifest),
        out_dir: ctx.out_dir.as_ref().map(|d| d.join(label)),
    })?;
    let (_, mean, std) = report.averages[0].clone();
    Ok(AblationRow {
        label: label.to_string(),
        avg_adv_acc: mean,
        std,
        per_target: report.targets.iter().map(|t| {
            (t.name.clone(), report.cell(label, &t.name).map(|c| c.adv_mean).unwrap_or(f32::NAN))
        }).collect(),
    })
}

/// Run the full ablation battery against the shared bench. Each row is
/// directly comparable to `baseline-etf` (same sources, guides, seeds).
pub fn run_ablations(ctx: &AblationContext) -> Result<AblationReport> {
    let mut rows = Vec::new();

    rows.push(one_row(ctx, "baseline-etf", ctx.baseline, ctx.attack_cfg, InnerSpace::Feature)?);

    // (a) augmentation off during surrogate training
    {
        let mut cfg = ctx.train_cfg.clone();
        cfg.augmentation = datapipe::AugmentationPolicy::disabled();
        let mut surrogate = Model::build(ctx.surrogate_spec, cfg.seed)?;
        train_supervised(&mut surrogate, ctx.few_shot, &cfg)?;
        rows.push(one_row(ctx, "no-aug-etf", &surrogate, ctx.attack_cfg, InnerSpace::Feature)?);
    }

    // (b) contrastive surrogate
    {
        let mut surrogate = Model::build(ctx.surrogate_spec, ctx.train_cfg.seed)?;
        train_contrastive(&mut surrogate, ctx.few_shot, ctx.train_cfg)?;
        rows.push(one_row(ctx, "contrastive-etf", &surrogate, ctx.attack_cfg, InnerSpace::Feature)?);
    }

    // (c) rotation-pretext surrogate (4-way head)
    {
        let mut spec = ctx.surrogate_spec.clone();
        spec.num_classes = 4;
        let mut surrogate = Model::build(&spec, ctx.train_cfg.seed)?;
        train_rotation(&mut surrogate, ctx.few_shot, ctx.train_cfg)?;
        rows.push(one_row(ctx, "rotation-etf", &surrogate, ctx.attack_cfg, InnerSpace::Feature)?);
    }

    // (d) weight-space inner max on the baseline surrogate
    rows.push(one_row(ctx, "weight-space-etf", ctx.baseline, ctx.attack_cfg, InnerSpace::Weight)?);

    // etf applied to every layer below the cut
    {
        let mut cfg = ctx.attack_cfg.clone();
        cfg.surface = LossSurface::EtfAll;
        rows.push(one_row(ctx, "etf-all", ctx.baseline, &cfg, InnerSpace::Feature)?);
    }

    // l2-norm budget variant
    {
        let mut cfg = ctx.attack_cfg.clone();
        cfg.norm = NormKind::L2;
        cfg.eps = l2_eps_for(ctx.few_shot.dims());
        cfg.tau = Some(cfg.eps / 2.0);
        rows.push(one_row(ctx, "l2-etf", ctx.baseline, &cfg, InnerSpace::Feature)?);
    }

    Ok(AblationReport { rows })
}

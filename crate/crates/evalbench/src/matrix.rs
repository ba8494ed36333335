//! Top-1 evaluation and the attack x target matrix with multi-seed
//! aggregation.

use crate::error::{BenchError, Result};
use crate::registry::TargetRegistry;
use attackkit::{run_attack_with, AttackBatch, AttackConfig, InnerSpace};
use datapipe::{FewShotManifest, SampleSet};
use nets::Model;
use serde::{Deserialize, Serialize};
use std::path::Path;
use tensorcore::{Tape, Tensor};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Clean-accuracy floor below which a target is flagged: the threat model
/// assumes samples the target predicts correctly with high probability.
pub const CLEAN_SANITY_FLOOR: f32 = 60.0;

/// Top-1 accuracy (percent) of an eval-mode model on an image tensor.
pub fn top1_accuracy(model: &Model, images: &Tensor, labels: &[u32]) -> Result<f32> {
    let (n, _, _, _) = images.dims4()?;
    if n == 0 || labels.len() != n {
        return Err(BenchError::EmptyEvaluation);
    }
    let chw: usize = images.shape()[1..].iter().product();
    let mut correct = 0usize;
    let classes = model.spec.num_classes;
    for start in (0..n).step_by(128) {
        let end = (start + 128).min(n);
        let mut tape = Tape::new();
        let xv = tape.constant(Tensor::new(
            images.shape().iter().enumerate().map(|(i, &d)| if i == 0 { end - start } else { d }).collect(),
            images.data()[start * chw..end * chw].to_vec(),
        )?);
        let logits = model.forward_logits(&mut tape, xv)?;
        let data = tape.value(logits).data();
        for (row, &label) in data.chunks(classes).zip(&labels[start..end]) {
            let mut best = 0usize;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            if best as u32 == label {
                correct += 1;
            }
        }
    }
    Ok(100.0 * correct as f32 / n as f32)
}

/// One labeled attack configuration in the matrix.
#[derive(Debug, Clone)]
pub struct LabeledAttack {
    pub label: String,
    pub config: AttackConfig,
    /// Feature- vs weight-space inner max (ablation rows use the latter).
    pub inner_space: InnerSpace,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportCell {
    pub attack: String,
    pub target: String,
    pub adv_mean: f32,
    pub adv_std: Option<f32>,
    pub per_seed: Vec<f32>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TargetSummary {
    pub name: String,
    pub clean_acc: f32,
    pub below_sanity_floor: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportMeta {
    pub eps: f32,
    pub norm: String,
    pub tau: f32,
    pub surrogate_hash: u64,
    pub n_examples: usize,
    pub seeds: Vec<u64>,
    pub truncation: String,
    pub eval_set: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub meta: ReportMeta,
    pub targets: Vec<TargetSummary>,
    pub attacks: Vec<String>,
    pub cells: Vec<ReportCell>,
    /// Cross-target average per attack: (label, mean, std over seeds).
    pub averages: Vec<(String, f32, Option<f32>)>,
}

impl EvaluationReport {
    pub fn cell(&self, attack: &str, target: &str) -> Option<&ReportCell> {
        self.cells.iter().find(|c| c.attack == attack && c.target == target)
    }

    pub fn average_of(&self, attack: &str) -> Option<f32> {
        self.averages.iter().find(|(a, _, _)| a == attack).map(|(_, m, _)| *m)
    }

    pub fn clean_average(&self) -> f32 {
        mean(&self.targets.iter().map(|t| t.clean_acc).collect::<Vec<_>>())
    }

    /// Recompute every aggregate from the persisted per-seed rows; used to
    /// verify the emitted summary.
    pub fn recompute_aggregates(&self) -> Vec<(String, f32, Option<f32>)> {
        aggregate_averages(&self.attacks, &self.targets, &self.cells)
    }
}

fn mean(v: &[f32]) -> f32 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f32>() / v.len() as f32
}

fn std_dev(v: &[f32]) -> Option<f32> {
    if v.len() < 2 {
        return None;
    }
    let m = mean(v);
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f32>() / (v.len() - 1) as f32;
    Some(var.sqrt())
}

fn aggregate_averages(
    attacks: &[String],
    targets: &[TargetSummary],
    cells: &[ReportCell],
) -> Vec<(String, f32, Option<f32>)> {
    let mut out = Vec::with_capacity(attacks.len());
    for a in attacks {
        // per-seed cross-target averages
        let rows: Vec<&ReportCell> = cells.iter().filter(|c| &c.attack == a).collect();
        let seeds = rows.first().map(|r| r.per_seed.len()).unwrap_or(0);
        let mut per_seed_avg = Vec::with_capacity(seeds);
        for s in 0..seeds {
            let vals: Vec<f32> = targets
                .iter()
                .filter_map(|t| rows.iter().find(|r| r.target == t.name).map(|r| r.per_seed[s]))
                .collect();
            per_seed_avg.push(mean(&vals));
        }
        out.push((a.clone(), mean(&per_seed_avg), std_dev(&per_seed_avg)));
    }
    out
}

/// Matrix inputs: the frozen surrogate, the attack sources (the few-shot
/// set under the default reading), the registry, and labeled configs.
pub struct MatrixJob<'a> {
    pub surrogate: &'a Model,
    pub sources: &'a SampleSet,
    /// The attacker's guide pool; `guides[i]` indexes into it.
    pub guide_pool: &'a SampleSet,
    pub guides: Vec<usize>,
    pub registry: &'a TargetRegistry,
    pub attacks: Vec<LabeledAttack>,
    pub seeds: Vec<u64>,
    /// Few-shot manifest for the provenance gate.
    pub few_shot: Option<&'a FewShotManifest>,
    /// Archive output root; per-(attack, seed) subdirectories.
    pub out_dir: Option<std::path::PathBuf>,
}

/// Run every (config, seed): generate the adversarial set once, evaluate on
/// every target, aggregate mean and std, and persist archives when an
/// output directory is given.
pub fn run_matrix(job: &MatrixJob) -> Result<EvaluationReport> {
    if job.attacks.is_empty() || job.seeds.is_empty() {
        return Err(BenchError::Invalid("matrix needs at least one attack and one seed".into()));
    }
    if let Some(manifest) = job.few_shot {
        job.registry.check_disjoint(manifest)?;
    }
    let labels = job
        .sources
        .labels
        .clone()
        .ok_or_else(|| BenchError::Invalid("attack sources need labels for evaluation".into()))?;
    let (c, h, w) = job.sources.dims();
    let n = job.sources.len();
    if job.guides.len() != n {
        return Err(BenchError::Invalid(format!("{} guides for {} sources", job.guides.len(), n)));
    }
    if job.guide_pool.dims() != job.sources.dims() {
        return Err(BenchError::Invalid("guide pool dims differ from sources".into()));
    }
    let guides_tensor = {
        let chw = c * h * w;
        let mut data = Vec::with_capacity(n * chw);
        for &g in &job.guides {
            if g >= job.guide_pool.len() {
                return Err(BenchError::Invalid(format!("guide index {g} outside the pool")));
            }
            data.extend_from_slice(job.guide_pool.image(g));
        }
        Tensor::new(vec![n, c, h, w], data)?
    };

    // Load targets once; clean accuracy on the evaluation set.
    let mut targets = Vec::new();
    let mut models = Vec::new();
    for entry in &job.registry.targets {
        let model = job.registry.load_model(&entry.name)?;
        let clean = top1_accuracy(&model, &job.sources.images, &labels)?;
        if clean < CLEAN_SANITY_FLOOR {
            eprintln!(
                "warning: target {} clean accuracy {clean:.2}% is below the sanity floor {CLEAN_SANITY_FLOOR}%",
                entry.name
            );
        }
        targets.push(TargetSummary {
            name: entry.name.clone(),
            clean_acc: clean,
            below_sanity_floor: clean < CLEAN_SANITY_FLOOR,
        });
        models.push(model);
    }

    let mut cells: Vec<ReportCell> = Vec::new();
    for la in &job.attacks {
        let mut per_target_seed: Vec<Vec<f32>> = vec![Vec::new(); targets.len()];
        for &seed in &job.seeds {
            let mut cfg = la.config.clone();
            cfg.seed = seed;
            let batch = AttackBatch {
                sources: job.sources.images.clone(),
                labels: Some(labels.clone()),
                guides: Some(guides_tensor.clone()),
                source_indices: (0..n as u32).collect(),
                guide_indices: Some(job.guides.iter().map(|&g| g as u32).collect()),
            };
            let outcome = run_attack_with(job.surrogate, &batch, &cfg, la.inner_space)?;
            if let Some(root) = &job.out_dir {
                let dir = root.join("archives").join(&la.label).join(format!("seed{seed}"));
                let examples: Vec<attackkit::ExampleRecord> = (0..n)
                    .map(|i| attackkit::ExampleRecord {
                        source_index: batch.source_indices[i],
                        guide_index: batch.guide_indices.as_ref().map(|g| g[i]),
                        final_objective: outcome.final_objectives[i],
                    })
                    .collect();
                attackkit::save_archive(
                    &dir,
                    &cfg,
                    job.surrogate.store.payload_hash(),
                    &outcome.x_adv,
                    examples,
                )?;
            }
            for (ti, model) in models.iter().enumerate() {
                let acc = top1_accuracy(model, &outcome.x_adv, &labels)?;
                per_target_seed[ti].push(acc);
            }
        }
        for (ti, t) in targets.iter().enumerate() {
            let per_seed = per_target_seed[ti].clone();
            cells.push(ReportCell {
                attack: la.label.clone(),
                target: t.name.clone(),
                adv_mean: mean(&per_seed),
                adv_std: std_dev(&per_seed),
                per_seed,
            });
        }
    }

    let attacks: Vec<String> = job.attacks.iter().map(|a| a.label.clone()).collect();
    let averages = aggregate_averages(&attacks, &targets, &cells);
    let base = &job.attacks[0].config;
    let report = EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        meta: ReportMeta {
            eps: base.eps,
            norm: serde_json::to_value(base.norm).unwrap().as_str().unwrap().to_string(),
            tau: base.tau(),
            surrogate_hash: job.surrogate.store.payload_hash(),
            n_examples: n,
            seeds: job.seeds.clone(),
            truncation: base.truncation.to_string(),
            eval_set: format!(
                "{}:{} (selection seed {:?})",
                job.sources.provenance.dataset, job.sources.provenance.split, job.sources.provenance.selection_seed
            ),
        },
        targets,
        attacks,
        cells,
        averages,
    };
    if let Some(root) = &job.out_dir {
        std::fs::create_dir_all(root)?;
        std::fs::write(
            root.join("report.json"),
            serde_json::to_vec_pretty(&report).expect("report serializes"),
        )?;
    }
    Ok(report)
}

/// Evaluate a persisted adversarial archive against a registry (re-runs of
/// single cells; matrix decomposability checks).
pub fn evaluate_archive(dir: &Path, registry: &TargetRegistry, labels: &[u32]) -> Result<Vec<(String, f32)>> {
    let (_, x_adv) = attackkit::load_archive(dir)?;
    let mut out = Vec::new();
    for entry in &registry.targets {
        let model = registry.load_model(&entry.name)?;
        out.push((entry.name.clone(), top1_accuracy(&model, &x_adv, labels)?));
    }
    Ok(out)
}

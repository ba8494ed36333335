//! Subcommand implementations. Every command resolves its run directory,
//! takes the directory lock, persists the resolved config and run info,
//! and writes deterministic outputs.

use crate::errors::{CliError, CliResult};
use crate::runconfig::RunConfig;
use attackkit::{AttackConfig, GuideStrategy, InnerSpace, LossSurface, StepMethod};
use datapipe::{sample_few_shot, FewShotManifest, FewShotSize, SampleSet};
use evalbench::{LabeledAttack, MatrixJob, ReportFormat, TargetRegistry};
use nets::{Family, Model, NetworkSpec, TruncationPoint};
use serde::Serialize;
use std::path::{Path, PathBuf};
use trainers::{TargetTrainConfig, TrainConfig};

/// One-writer guard for a run directory.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> CliResult<DirLock> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(".lock");
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Other(format!(
                "run directory {} is locked by another writer (remove {} if stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[derive(Serialize)]
struct RunInfo {
    code_version: &'static str,
    config_hash: u64,
    data_dir: String,
}

fn persist_run_info(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("resolved.config"), &cfg.text)?;
    let info = RunInfo {
        code_version: env!("CARGO_PKG_VERSION"),
        config_hash: tensorcore::hash::fnv1a64(cfg.text.as_bytes()),
        data_dir: cfg.data_dir().map(|p| p.display().to_string()).unwrap_or_default(),
    };
    std::fs::write(out.join("run.info.json"), serde_json::to_vec_pretty(&info).expect("info serializes"))?;
    Ok(())
}

// ---- config -> domain structs ----

pub fn surrogate_spec(cfg: &RunConfig) -> CliResult<NetworkSpec> {
    let family: Family = cfg.parse_or("surrogate", "family", Family::SimplifiedResnet18)?;
    let width: usize = cfg.parse_or("surrogate", "width", 16)?;
    let classes: usize = cfg.parse_or("surrogate", "num_classes", 10)?;
    let size: usize = cfg.parse_or("data", "image_size", 32)?;
    Ok(NetworkSpec::new(family, (3, size, size), classes, width)?)
}

pub fn train_config(cfg: &RunConfig) -> CliResult<TrainConfig> {
    let mut tc = TrainConfig {
        batch_size: cfg.parse_or("surrogate", "batch_size", 128)?,
        epochs: cfg.parse_or("surrogate", "epochs", 500)?,
        lr_start: cfg.parse_or("surrogate", "lr_start", 0.4)?,
        lr_end: cfg.parse_or("surrogate", "lr_end", 0.008)?,
        momentum: cfg.parse_or("surrogate", "momentum", 0.9)?,
        weight_decay: cfg.parse_or("surrogate", "weight_decay", 5e-4)?,
        temperature: cfg.parse_or("surrogate", "temperature", 0.5)?,
        seed: cfg.parse_or("surrogate", "seed", 0)?,
        augmentation: datapipe::AugmentationPolicy::default(),
    };
    if let Some(aug) = cfg.get("surrogate", "augmentation") {
        match aug {
            "on" => {}
            "off" => tc.augmentation = datapipe::AugmentationPolicy::disabled(),
            other => return Err(CliError::Config(format!("augmentation must be on|off, got {other}"))),
        }
    }
    Ok(tc)
}

pub fn attack_from_section(cfg: &RunConfig, section: &str, label: &str) -> CliResult<(LabeledAttack, InnerSpace)> {
    let surface: LossSurface = cfg
        .require(section, "surface")?
        .parse()
        .map_err(|e: attackkit::AttackError| CliError::Config(e.to_string()))?;
    let method: StepMethod = cfg
        .require(section, "method")?
        .parse()
        .map_err(|e: attackkit::AttackError| CliError::Config(e.to_string()))?;
    let eps: f32 = cfg
        .require(section, "eps")?
        .parse()
        .map_err(|e| CliError::Config(format!("bad eps: {e}")))?;
    let mut a = AttackConfig::new(surface, method, eps);
    if let Some(v) = cfg.parse_val::<String>(section, "norm")? {
        a.norm = v.parse().map_err(|e: attackkit::AttackError| CliError::Config(e.to_string()))?;
    }
    a.steps = cfg.parse_or(section, "steps", a.steps)?;
    a.step_size = cfg.parse_val(section, "step_size")?;
    a.tau = cfg.parse_val(section, "tau")?;
    a.inner_steps = cfg.parse_or(section, "inner_steps", a.inner_steps)?;
    a.inner_step_size = cfg.parse_val(section, "inner_step_size")?;
    if let Some(v) = cfg.parse_val::<String>(section, "truncation")? {
        a.truncation = v.parse()?;
    }
    if let Some(v) = cfg.parse_val::<String>(section, "metric")? {
        a.metric = v.parse().map_err(|e: attackkit::AttackError| CliError::Config(e.to_string()))?;
    }
    if let Some(v) = cfg.parse_val::<String>(section, "guide")? {
        a.guide = v.parse().map_err(|e: attackkit::AttackError| CliError::Config(e.to_string()))?;
    }
    a.mi_decay = cfg.parse_or(section, "mi_decay", a.mi_decay)?;
    a.di_prob = cfg.parse_or(section, "di_prob", a.di_prob)?;
    a.ti_kernel_size = cfg.parse_or(section, "ti_kernel_size", a.ti_kernel_size)?;
    a.ti_sigma = cfg.parse_or(section, "ti_sigma", a.ti_sigma)?;
    a.batch_size = cfg.parse_or(section, "batch_size", a.batch_size)?;
    a.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let inner_space = match cfg.get(section, "inner_space") {
        Some("weight") => InnerSpace::Weight,
        Some("feature") | None => InnerSpace::Feature,
        Some(other) => return Err(CliError::Config(format!("inner_space must be feature|weight, got {other}"))),
    };
    Ok((LabeledAttack { label: label.to_string(), config: a, inner_space: InnerSpace::Feature }, inner_space))
}

pub fn eval_seeds(cfg: &RunConfig) -> CliResult<Vec<u64>> {
    let raw = cfg.get("eval", "seeds").unwrap_or("11,12,13,14,15");
    raw.split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|e| CliError::Config(format!("bad seed '{s}': {e}"))))
        .collect()
}

// ---- datasets ----

pub fn load_pool_and_train(cfg: &RunConfig) -> CliResult<(SampleSet, SampleSet)> {
    let dir = cfg.data_dir()?;
    match cfg.get("data", "dataset").unwrap_or("cifar10") {
        "cifar10" => {
            let (train, test) = datapipe::load_cifar10_binary(&dir)?;
            Ok((test, train))
        }
        "folder" => {
            let size: usize = cfg.parse_or("data", "image_size", 32)?;
            let set = datapipe::load_folder_dataset(&dir, size, size)?;
            Err(CliError::Config(format!(
                "folder datasets ({} samples) only support train-surrogate; use dataset = cifar10 for the bench",
                set.len()
            )))
        }
        other => Err(CliError::Config(format!("unknown dataset: {other}"))),
    }
}

/// The attacker-visible pool only (folder datasets allowed).
pub fn load_pool(cfg: &RunConfig) -> CliResult<SampleSet> {
    let dir = cfg.data_dir()?;
    match cfg.get("data", "dataset").unwrap_or("cifar10") {
        "cifar10" => {
            let (_, test) = datapipe::load_cifar10_binary(&dir)?;
            Ok(test)
        }
        "folder" => {
            let size: usize = cfg.parse_or("data", "image_size", 32)?;
            Ok(datapipe::load_folder_dataset(&dir, size, size)?)
        }
        other => Err(CliError::Config(format!("unknown dataset: {other}"))),
    }
}

// ---- commands ----

pub fn cmd_gradcheck(widths: usize) -> CliResult<()> {
    let worst = crate::gradcheck::run_battery(widths).map_err(|e| CliError::Numeric(e))?;
    println!("gradcheck: worst max relative error {worst:.3e} (threshold 1e-3)");
    if worst < 1e-3 {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("finite-difference suite failed: {worst} >= 1e-3")))
    }
}

pub fn cmd_train_targets(cfg: &RunConfig) -> CliResult<()> {
    let out = cfg.output_dir()?;
    let _lock = DirLock::acquire(&out)?;
    persist_run_info(cfg, &out)?;
    let (pool, train_split) = load_pool_and_train(cfg)?;
    let _ = pool;
    let (_, test_split) = {
        let dir = cfg.data_dir()?;
        datapipe::load_cifar10_binary(&dir)?
    };
    let specs_raw = cfg.require("targets", "specs")?;
    let tcfg = TargetTrainConfig {
        batch_size: cfg.parse_or("targets", "batch_size", 128)?,
        epochs: cfg.parse_or("targets", "epochs", 60)?,
        lr: cfg.parse_or("targets", "lr", 0.1)?,
        momentum: cfg.parse_or("targets", "momentum", 0.9)?,
        weight_decay: cfg.parse_or("targets", "weight_decay", 5e-4)?,
        subset: cfg.parse_val("targets", "subset")?,
        seed: cfg.parse_or("targets", "seed", 100)?,
    };
    let few_shot_manifest = find_few_shot_manifest(&out);
    let size: usize = cfg.parse_or("data", "image_size", 32)?;
    let classes: usize = cfg.parse_or("surrogate", "num_classes", 10)?;

    let mut registry = TargetRegistry::default();
    let tdir = out.join("targets");
    std::fs::create_dir_all(&tdir)?;
    for (i, spec_str) in specs_raw.split(',').enumerate() {
        let spec_str = spec_str.trim();
        let (family_str, width) = match spec_str.split_once(':') {
            Some((f, w)) => (f, w.parse::<usize>().map_err(|e| CliError::Config(format!("bad width: {e}")))?),
            None => (spec_str, 16),
        };
        let family: Family = family_str.parse()?;
        let spec = NetworkSpec::new(family, (3, size, size), classes, width)?;
        let mut cfg_i = tcfg.clone();
        cfg_i.seed = tcfg.seed + i as u64;
        println!("training target {family_str} (width {width}, epochs {}, seed {})", cfg_i.epochs, cfg_i.seed);
        let (model, history, clean) =
            trainers::train_target(&spec, &train_split, &test_split, &cfg_i, few_shot_manifest.as_ref())?;
        let path = tdir.join(format!("{family_str}.lbba"));
        nets::save_checkpoint(&model, &path)?;
        let data = match cfg_i.subset {
            Some(n) if n < train_split.len() => {
                datapipe::sample_few_shot(&train_split, FewShotSize::Total(n), cfg_i.seed)?.provenance
            }
            _ => train_split.provenance.clone(),
        };
        TargetRegistry::write_provenance(&path, &data)?;
        history.save_jsonl(&tdir.join(format!("{family_str}.history.jsonl")))?;
        registry.add(family_str, path)?;
        println!("  clean test accuracy: {clean:.2}%");
    }
    registry.save(&tdir.join("registry.json"))?;
    Ok(())
}

fn find_few_shot_manifest(out: &Path) -> Option<FewShotManifest> {
    let dir = out.join("surrogates");
    let entries = std::fs::read_dir(&dir).ok()?;
    for e in entries.flatten() {
        let p = e.path();
        if p.extension().map(|x| x == "json").unwrap_or(false)
            && p.file_name().map(|n| n.to_string_lossy().contains("fewshot")).unwrap_or(false)
        {
            if let Ok(m) = FewShotManifest::load(&p) {
                return Some(m);
            }
        }
    }
    None
}

pub struct SurrogateArtifacts {
    pub model: Model,
    pub few_shot: SampleSet,
    pub manifest: FewShotManifest,
}

pub fn cmd_train_surrogate(cfg: &RunConfig, objective_flag: Option<&str>, n_per_class_flag: Option<usize>) -> CliResult<()> {
    let out = cfg.output_dir()?;
    let _lock = DirLock::acquire(&out)?;
    persist_run_info(cfg, &out)?;
    let objective = objective_flag
        .map(str::to_string)
        .or_else(|| cfg.get("surrogate", "objective").map(str::to_string))
        .unwrap_or_else(|| "supervised".into());
    let pool = load_pool(cfg)?;
    let tc = train_config(cfg)?;
    let mut spec = surrogate_spec(cfg)?;
    if objective == "rotation" {
        spec.num_classes = 4;
    }

    let few_shot = select_few_shot(cfg, &pool, n_per_class_flag, tc.seed)?;
    let manifest = datapipe::manifest_for(&few_shot, tc.seed);
    let sdir = out.join("surrogates");
    std::fs::create_dir_all(&sdir)?;
    manifest
        .save(&sdir.join(format!("{objective}.fewshot.json")))
        .map_err(CliError::from)?;

    let mut model = Model::build(&spec, tc.seed)?;
    println!(
        "training {objective} surrogate: {} images, {} epochs, width {}",
        few_shot.len(),
        tc.epochs,
        spec.width_base
    );
    let history = match objective.as_str() {
        "supervised" => trainers::train_supervised(&mut model, &few_shot, &tc)?,
        "contrastive" => trainers::train_contrastive(&mut model, &few_shot, &tc)?,
        "rotation" => trainers::train_rotation(&mut model, &few_shot, &tc)?,
        other => return Err(CliError::Config(format!("unknown objective: {other}"))),
    };
    nets::save_checkpoint(&model, &sdir.join(format!("{objective}.lbba")))?;
    history.save_jsonl(&sdir.join(format!("{objective}.history.jsonl")))?;
    if let Some(last) = history.last() {
        println!("final epoch: loss {:.4}, acc {:.2}%", last.loss, last.acc);
    }
    Ok(())
}

fn select_few_shot(
    cfg: &RunConfig,
    pool: &SampleSet,
    n_per_class_flag: Option<usize>,
    seed: u64,
) -> CliResult<SampleSet> {
    let size = match (n_per_class_flag, cfg.parse_val::<usize>("surrogate", "n_per_class")?, cfg.parse_val::<usize>("surrogate", "n_total")?) {
        (Some(n), _, _) => FewShotSize::PerClass(n),
        (None, Some(n), _) => FewShotSize::PerClass(n),
        (None, None, Some(n)) => FewShotSize::Total(n),
        (None, None, None) => FewShotSize::PerClass(100),
    };
    Ok(sample_few_shot(pool, size, seed)?)
}

pub fn load_surrogate(cfg: &RunConfig, objective: &str) -> CliResult<SurrogateArtifacts> {
    let out = cfg.output_dir()?;
    let sdir = out.join("surrogates");
    let model = nets::load_checkpoint(&sdir.join(format!("{objective}.lbba")))?;
    let manifest = FewShotManifest::load(&sdir.join(format!("{objective}.fewshot.json")))?;
    let pool = load_pool(cfg)?;
    let positions: Vec<usize> = manifest.indices.iter().map(|&i| i as usize).collect();
    let mut few_shot = pool.select(&positions)?;
    few_shot.provenance.selection_seed = Some(manifest.seed);
    Ok(SurrogateArtifacts { model, few_shot, manifest })
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_attack(
    cfg: &RunConfig,
    surface: &str,
    method: &str,
    eps: f32,
    tau: Option<f32>,
    norm: Option<&str>,
    steps: Option<usize>,
    export_png: bool,
) -> CliResult<()> {
    // Validate the attack description before touching any artifacts.
    let surface: LossSurface = surface.parse().map_err(|e: attackkit::AttackError| CliError::Config(e.to_string()))?;
    let method: StepMethod = method.parse().map_err(|e: attackkit::AttackError| CliError::Config(e.to_string()))?;
    let mut a = AttackConfig::new(surface, method, eps);
    a.tau = tau;
    if let Some(n) = norm {
        a.norm = n.parse().map_err(|e: attackkit::AttackError| CliError::Config(e.to_string()))?;
    }
    if let Some(t) = steps {
        a.steps = t;
    }
    a.seed = eval_seeds(cfg)?[0];
    a.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let out = cfg.output_dir()?;
    let _lock = DirLock::acquire(&out)?;
    persist_run_info(cfg, &out)?;
    let objective = cfg.get("surrogate", "objective").unwrap_or("supervised");
    let art = load_surrogate(cfg, objective)?;

    let label = format!("{}-{}", cfg.require("surrogate", "family").unwrap_or("surrogate"), a.seed);
    let _ = label;
    let sources = &art.few_shot;
    let all: Vec<usize> = (0..sources.len()).collect();
    let guides = attackkit::select_guides(
        &all,
        sources,
        a.guide,
        match a.guide {
            GuideStrategy::FeatureFar => Some((&art.model, a.truncation)),
            GuideStrategy::RandomDiffLabel => None,
        },
        a.seed,
    )?;
    let (c, h, w) = sources.dims();
    let chw = c * h * w;
    let mut gdata = Vec::with_capacity(sources.len() * chw);
    for &g in &guides {
        gdata.extend_from_slice(sources.image(g));
    }
    let batch = attackkit::AttackBatch {
        sources: sources.images.clone(),
        labels: sources.labels.clone(),
        guides: Some(tensorcore::Tensor::new(vec![sources.len(), c, h, w], gdata)?),
        source_indices: (0..sources.len() as u32).collect(),
        guide_indices: Some(guides.iter().map(|&g| g as u32).collect()),
    };
    println!(
        "attacking {} sources: surface {:?}, method {:?}, eps {}, steps {}",
        sources.len(),
        a.surface,
        a.method,
        a.eps,
        a.steps
    );
    let outcome = attackkit::run_attack(&art.model, &batch, &a)?;
    let surface_name = serde_json::to_value(a.surface).unwrap().as_str().unwrap().to_string();
    let method_name = serde_json::to_value(a.method).unwrap().as_str().unwrap().to_string();
    let dir = out.join("attacks").join(format!("{surface_name}-{method_name}")).join(format!("seed{}", a.seed));
    let examples: Vec<attackkit::ExampleRecord> = (0..sources.len())
        .map(|i| attackkit::ExampleRecord {
            source_index: batch.source_indices[i],
            guide_index: batch.guide_indices.as_ref().map(|g| g[i]),
            final_objective: outcome.final_objectives[i],
        })
        .collect();
    attackkit::save_archive(&dir, &a, art.model.store.payload_hash(), &outcome.x_adv, examples)?;
    if export_png {
        attackkit::archive::export_pngs(&dir, &outcome.x_adv)?;
    }
    println!("archive written to {}", dir.display());
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig) -> CliResult<()> {
    let out = cfg.output_dir()?;
    let _lock = DirLock::acquire(&out)?;
    persist_run_info(cfg, &out)?;
    let objective = cfg.get("surrogate", "objective").unwrap_or("supervised");
    let art = load_surrogate(cfg, objective)?;
    let registry = TargetRegistry::load(&out.join("targets/registry.json"))
        .map_err(|e| CliError::Config(format!("no target registry (run train-targets first): {e}")))?;
    let sections = cfg.attack_sections();
    if sections.is_empty() {
        return Err(CliError::Config("no [attack:NAME] sections in config".into()));
    }
    let mut attacks = Vec::new();
    for (label, _) in &sections {
        let (mut la, inner_space) = attack_from_section(cfg, &format!("attack:{label}"), label)?;
        la.inner_space = inner_space;
        attacks.push(la);
    }
    let base = attacks[0].config.clone();
    let all: Vec<usize> = (0..art.few_shot.len()).collect();
    let guides = attackkit::select_guides(
        &all,
        &art.few_shot,
        base.guide,
        match base.guide {
            GuideStrategy::FeatureFar => Some((&art.model, base.truncation)),
            GuideStrategy::RandomDiffLabel => None,
        },
        base.seed,
    )?;
    let seeds = eval_seeds(cfg)?;
    println!("running matrix: {} attacks x {} targets x {} seeds", attacks.len(), registry.targets.len(), seeds.len());
    let report = evalbench::run_matrix(&MatrixJob {
        surrogate: &art.model,
        sources: &art.few_shot,
        guide_pool: &art.few_shot,
        guides,
        registry: &registry,
        attacks,
        seeds,
        few_shot: Some(&art.manifest),
        out_dir: Some(out.join("reports")),
    })?;
    let formats = parse_formats(cfg.get("eval", "formats").unwrap_or("json,csv,md"))?;
    evalbench::emit(&report, &out.join("reports"), &formats)?;
    println!("{}", evalbench::to_markdown(&report));
    Ok(())
}

fn parse_formats(raw: &str) -> CliResult<Vec<ReportFormat>> {
    raw.split(',')
        .map(|f| match f.trim() {
            "csv" => Ok(ReportFormat::Csv),
            "md" => Ok(ReportFormat::Markdown),
            "json" => Ok(ReportFormat::Json),
            other => Err(CliError::Config(format!("unknown format: {other}"))),
        })
        .collect()
}

pub fn cmd_sweep(cfg: &RunConfig, kind: &str) -> CliResult<()> {
    let out = cfg.output_dir()?;
    let _lock = DirLock::acquire(&out)?;
    persist_run_info(cfg, &out)?;
    let registry = TargetRegistry::load(&out.join("targets/registry.json"))
        .map_err(|e| CliError::Config(format!("no target registry: {e}")))?;
    let sections = cfg.attack_sections();
    let (label, _) = sections
        .first()
        .ok_or_else(|| CliError::Config("sweeps need one [attack:NAME] section".into()))?;
    let (la, _) = attack_from_section(cfg, &format!("attack:{label}"), label)?;
    let seeds = parse_seed_list(cfg.get("sweep", "seeds").unwrap_or("11,12,13"))?;
    match kind {
        "samples" => {
            let ns: Vec<usize> = cfg
                .get("sweep", "samples")
                .unwrap_or("10,100,1000")
                .split(',')
                .map(|s| s.trim().parse().map_err(|e| CliError::Config(format!("bad n: {e}"))))
                .collect::<CliResult<_>>()?;
            let pool = load_pool(cfg)?;
            let spec = surrogate_spec(cfg)?;
            let tc = train_config(cfg)?;
            let points = evalbench::sweep_samples(
                &pool,
                &registry,
                &spec,
                &tc,
                &la.config,
                &seeds,
                &ns,
                Some(&out.join("sweeps")),
            )?;
            let svg = evalbench::sweep_svg(&points, "average adversarial accuracy vs sample count");
            std::fs::create_dir_all(out.join("sweeps"))?;
            std::fs::write(out.join("sweeps/samples.svg"), svg)?;
            std::fs::write(
                out.join("sweeps/samples.json"),
                serde_json::to_vec_pretty(&points).expect("points serialize"),
            )?;
            for p in &points {
                println!("n = {:>6}: avg adv acc {:.2}%", p.at, p.avg_adv_acc);
            }
        }
        "layers" => {
            let objective = cfg.get("surrogate", "objective").unwrap_or("supervised");
            let art = load_surrogate(cfg, objective)?;
            let truncs: Vec<TruncationPoint> = cfg
                .get("sweep", "layers")
                .unwrap_or("stem,block1,block2,block3,block4,fc")
                .split(',')
                .map(|s| s.trim().parse().map_err(CliError::from))
                .collect::<CliResult<_>>()?;
            let outcome = evalbench::sweep_layers(
                &art.model,
                &art.few_shot,
                &art.manifest,
                &registry,
                &la.config,
                &seeds,
                &truncs,
                Some(&out.join("sweeps")),
            )?;
            let svg = evalbench::sweep_svg(&outcome.points, "average adversarial accuracy vs truncation");
            std::fs::create_dir_all(out.join("sweeps"))?;
            std::fs::write(out.join("sweeps/layers.svg"), svg)?;
            std::fs::write(
                out.join("sweeps/layers.json"),
                serde_json::to_vec_pretty(&outcome.points).expect("points serialize"),
            )?;
            for p in &outcome.points {
                println!("layer {:>7}: avg adv acc {:.2}%", p.at.to_string(), p.avg_adv_acc);
            }
            println!("deep reference: {:.2}%", outcome.deep_reference);
        }
        other => return Err(CliError::Config(format!("sweep kind must be samples|layers, got {other}"))),
    }
    Ok(())
}

fn parse_seed_list(raw: &str) -> CliResult<Vec<u64>> {
    raw.split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|e| CliError::Config(format!("bad seed '{s}': {e}"))))
        .collect()
}

pub fn cmd_report(run_dir: &Path, format: &str) -> CliResult<()> {
    let report_path = run_dir.join("reports/report.json");
    if report_path.exists() {
        let bytes = std::fs::read(&report_path)?;
        let report: evalbench::EvaluationReport =
            serde_json::from_slice(&bytes).map_err(|e| CliError::Data(e.to_string()))?;
        let text = match format {
            "csv" => evalbench::to_csv(&report),
            "md" => evalbench::to_markdown(&report),
            "json" => evalbench::to_json(&report),
            other => return Err(CliError::Config(format!("format must be csv|md|json, got {other}"))),
        };
        println!("{text}");
        return Ok(());
    }
    Err(CliError::Data(format!("no report.json under {}", run_dir.display())))
}

//! Toy-scale run of the ablation battery: every row executes and labels
//! come back in order. Directions are meaningless at this scale; the
//! acceptance bench owns those.

use attackkit::{AttackConfig, LossSurface, StepMethod};
use datapipe::{AugmentationPolicy, FewShotManifest, IndexSelection, Provenance, SampleSet};
use evalbench::{run_ablations, AblationContext, TargetRegistry};
use nets::{Family, Model, NetworkSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensorcore::Tensor;
use trainers::TrainConfig;

#[test]
fn every_ablation_row_runs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = NetworkSpec::new(Family::SimplifiedResnet18, (3, 16, 16), 4, 4).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 8;
    let len = n * 3 * 16 * 16;
    let few_shot = SampleSet::new(
        Tensor::new(vec![n, 3, 16, 16], (0..len).map(|_| rng.random_range(0.0f32..1.0)).collect()).unwrap(),
        Some((0..n as u32).map(|i| i % 4).collect()),
        4,
        Provenance {
            dataset: "toy".into(),
            split: "test".into(),
            selection_seed: Some(1),
            indices: IndexSelection::Subset((0..n as u32).collect()),
        },
    )
    .unwrap();
    let manifest = FewShotManifest {
        dataset: "toy".into(),
        split: "test".into(),
        seed: 1,
        indices: (0..n as u32).collect(),
        class_count: 4,
    };

    let mut registry = TargetRegistry::default();
    let target = Model::build(&spec, 50).unwrap();
    let tpath = dir.path().join("t.lbba");
    nets::save_checkpoint(&target, &tpath).unwrap();
    TargetRegistry::write_provenance(
        &tpath,
        &Provenance {
            dataset: "toy".into(),
            split: "train".into(),
            selection_seed: None,
            indices: IndexSelection::All(64),
        },
    )
    .unwrap();
    registry.add("t", tpath).unwrap();

    let baseline = Model::build(&spec, 7).unwrap();
    let train_cfg = TrainConfig {
        epochs: 1,
        batch_size: 8,
        lr_start: 0.05,
        lr_end: 0.01,
        seed: 7,
        augmentation: AugmentationPolicy::default(),
        ..Default::default()
    };
    let mut attack_cfg = AttackConfig::new(LossSurface::Etf, StepMethod::Pgd, 0.08);
    attack_cfg.steps = 2;
    attack_cfg.inner_steps = 1;

    let report = run_ablations(&AblationContext {
        few_shot: &few_shot,
        few_shot_manifest: &manifest,
        registry: &registry,
        surrogate_spec: &spec,
        train_cfg: &train_cfg,
        attack_cfg: &attack_cfg,
        seeds: &[1],
        out_dir: Some(dir.path().join("ablations")),
        baseline: &baseline,
    })
    .unwrap();

    let labels: Vec<&str> = report.rows.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(
        labels,
        vec!["baseline-etf", "no-aug-etf", "contrastive-etf", "rotation-etf", "weight-space-etf", "etf-all", "l2-etf"]
    );
    for row in &report.rows {
        assert!((0.0..=100.0).contains(&row.avg_adv_acc), "{}: {}", row.label, row.avg_adv_acc);
        assert_eq!(row.per_target.len(), 1);
    }
}

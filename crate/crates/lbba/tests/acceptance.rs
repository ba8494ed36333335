//! Acceptance suite: one test per criterion, printing a pass/fail line
//! each. The desk-scale bench (CIFAR-10, three targets, a 1000-image
//! few-shot surrogate) is built once per process and heavy artifacts are
//! cached on disk keyed by their spec hashes, so reruns on an unchanged
//! tree skip straight to the measurements.
//!
//! Requires the CIFAR-10 binary batches under $LBBA_DATA_DIR. Run with
//! `cargo test -p lbba --test acceptance -- --nocapture` to see the
//! per-criterion lines.

use attackkit::{
    l2_eps_for, select_guides, AttackBatch, AttackConfig, GuideStrategy, InnerSpace, LossSurface, NormKind,
    StepMethod,
};
use datapipe::{sample_few_shot, FewShotManifest, FewShotSize, SampleSet};
use evalbench::{run_matrix, top1_accuracy, EvaluationReport, LabeledAttack, MatrixJob, TargetRegistry};
use nets::{Family, Model, NetworkSpec, TruncationPoint};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;
use tensorcore::Tensor;
use trainers::{train_contrastive, train_rotation, train_supervised, TrainConfig};

// ---- the desk-scale bench configuration ----

const SURROGATE_WIDTH: usize = 16;
const SURROGATE_EPOCHS: usize = 120;
const SURROGATE_SEED: u64 = 7;
const N_PER_CLASS: usize = 100;
const BENCH_SEEDS: [u64; 3] = [11, 12, 13];
const EPS: f32 = 0.1;
const ABLATION_EXAMPLES: usize = 200;
const LAYER_SWEEP_EXAMPLES: usize = 120;

fn target_roster() -> Vec<(&'static str, Family, usize, usize, usize, f32, u64)> {
    // (name, family, width, subset, epochs, lr, seed)
    vec![
        ("resnet20-target", Family::Resnet20Target, 16, 25000, 20, 0.1, 100),
        ("vgg11-target", Family::Vgg11Target, 16, 25000, 22, 0.1, 101),
        ("mobilenet-lite-target", Family::MobilenetLiteTarget, 32, 25000, 30, 0.1, 102),
    ]
}

fn train_cfg() -> TrainConfig {
    TrainConfig {
        epochs: SURROGATE_EPOCHS,
        seed: SURROGATE_SEED,
        ..Default::default()
    }
}

fn attack_cfg(surface: LossSurface, method: StepMethod) -> AttackConfig {
    // Spec-default budgets: T=50, alpha=2eps/T, tau=eps/2, K=5, block1.
    AttackConfig::new(surface, method, EPS)
}

// ---- pipeline ----

struct Pipeline {
    workdir: PathBuf,
    test_set: SampleSet,
    few_shot: SampleSet,
    manifest: FewShotManifest,
    surrogate: Model,
    registry: TargetRegistry,
    clean_test_accs: Vec<(String, f32)>,
    report: EvaluationReport,
    report_json: String,
    report_csv: String,
    bench_attack_seconds: f64,
    guides: Vec<usize>,
}

static PIPELINE: OnceLock<Pipeline> = OnceLock::new();

fn data_dir() -> PathBuf {
    PathBuf::from(std::env::var("LBBA_DATA_DIR").expect(
        "LBBA_DATA_DIR must point at the CIFAR-10 binary batches (see README: staging the dataset)",
    ))
}

fn workdir() -> PathBuf {
    std::env::var("LBBA_ACCEPT_DIR").map(PathBuf::from).unwrap_or_else(|_| {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/lbba-acceptance")
    })
}

fn load_or_train_target(
    dir: &Path,
    name: &str,
    spec: &NetworkSpec,
    train_split: &SampleSet,
    test_split: &SampleSet,
    cfg: &trainers::TargetTrainConfig,
    manifest: &FewShotManifest,
) -> Model {
    let path = dir.join(format!("{name}.lbba"));
    if let Ok(model) = nets::load_checkpoint_expecting(&path, spec) {
        if model.store.meta.epoch as usize == cfg.epochs && model.store.meta.seed == cfg.seed {
            eprintln!("[pipeline] target {name}: cached checkpoint");
            return model;
        }
    }
    eprintln!("[pipeline] target {name}: training {} epochs on {:?} samples", cfg.epochs, cfg.subset);
    let t0 = Instant::now();
    let (model, history, clean) =
        trainers::train_target(spec, train_split, test_split, cfg, Some(manifest)).expect("target training");
    eprintln!(
        "[pipeline] target {name}: clean test {clean:.2}% after {:.0}s",
        t0.elapsed().as_secs_f64()
    );
    nets::save_checkpoint(&model, &path).expect("save target");
    let prov = match cfg.subset {
        Some(n) if n < train_split.len() => {
            sample_few_shot(train_split, FewShotSize::Total(n), cfg.seed).expect("subset").provenance
        }
        _ => train_split.provenance.clone(),
    };
    TargetRegistry::write_provenance(&path, &prov).expect("provenance");
    history.save_jsonl(&dir.join(format!("{name}.history.jsonl"))).expect("history");
    model
}

fn load_or_train_surrogate<F>(path: &Path, spec: &NetworkSpec, epochs: usize, seed: u64, train: F) -> Model
where
    F: FnOnce() -> Model,
{
    if let Ok(model) = nets::load_checkpoint_expecting(path, spec) {
        if model.store.meta.epoch as usize == epochs && model.store.meta.seed == seed {
            eprintln!("[pipeline] surrogate {}: cached", path.file_name().unwrap().to_string_lossy());
            return model;
        }
    }
    let model = train();
    nets::save_checkpoint(&model, path).expect("save surrogate");
    model
}

fn pipeline() -> &'static Pipeline {
    PIPELINE.get_or_init(|| {
        let workdir = workdir();
        std::fs::create_dir_all(&workdir).expect("workdir");
        let (train_set, test_set) = datapipe::load_cifar10_binary(&data_dir()).expect("CIFAR-10 data");

        // Attacker's world: 1000 test images, 100 per class.
        let few_shot =
            sample_few_shot(&test_set, FewShotSize::PerClass(N_PER_CLASS), SURROGATE_SEED).expect("few-shot");
        let manifest = datapipe::manifest_for(&few_shot, SURROGATE_SEED);
        manifest.save(&workdir.join("fewshot.json")).expect("manifest");

        // Targets (train split only, disjoint by construction and checked).
        let tdir = workdir.join("targets");
        std::fs::create_dir_all(&tdir).expect("targets dir");
        let mut registry = TargetRegistry::default();
        let mut clean_test_accs = Vec::new();
        for (name, family, width, subset, epochs, lr, seed) in target_roster() {
            let spec = NetworkSpec::new(family, (3, 32, 32), 10, width).expect("spec");
            let cfg = trainers::TargetTrainConfig {
                epochs,
                lr,
                subset: Some(subset),
                seed,
                ..Default::default()
            };
            let model = load_or_train_target(&tdir, name, &spec, &train_set, &test_set, &cfg, &manifest);
            let clean = trainers::evaluate_top1(&model, &test_set, 256).expect("clean eval");
            clean_test_accs.push((name.to_string(), clean));
            registry.add(name, tdir.join(format!("{name}.lbba"))).expect("register");
        }
        registry.save(&workdir.join("targets/registry.json")).expect("registry");

        // Supervised surrogate on the few-shot set.
        let spec = NetworkSpec::new(Family::SimplifiedResnet18, (3, 32, 32), 10, SURROGATE_WIDTH).expect("spec");
        let surrogate = load_or_train_surrogate(
            &workdir.join("surrogate-supervised.lbba"),
            &spec,
            SURROGATE_EPOCHS,
            SURROGATE_SEED,
            || {
                eprintln!("[pipeline] training supervised surrogate ({SURROGATE_EPOCHS} epochs on 1000 images)");
                let t0 = Instant::now();
                let mut m = Model::build(&spec, SURROGATE_SEED).expect("build");
                let hist = train_supervised(&mut m, &few_shot, &train_cfg()).expect("train");
                let last = hist.last().unwrap();
                eprintln!(
                    "[pipeline] surrogate: loss {:.3}, augmented train acc {:.1}% after {:.0}s",
                    last.loss,
                    last.acc,
                    t0.elapsed().as_secs_f64()
                );
                hist.save_jsonl(&workdir.join("surrogate-supervised.history.jsonl")).expect("history");
                m
            },
        );

        // Criterion-5 matrix: Deep-/Shallow-/ETF-PGD x 3 seeds x 1000 examples.
        let guides = select_guides(
            &(0..few_shot.len()).collect::<Vec<_>>(),
            &few_shot,
            GuideStrategy::RandomDiffLabel,
            None,
            SURROGATE_SEED,
        )
        .expect("guides");
        eprintln!("[pipeline] running the criterion-5 matrix (3 attacks x 3 seeds x 1000 examples)");
        let t0 = Instant::now();
        let report = run_matrix(&MatrixJob {
            surrogate: &surrogate,
            sources: &few_shot,
            guide_pool: &few_shot,
            guides: guides.clone(),
            registry: &registry,
            attacks: vec![
                LabeledAttack {
                    label: "deep-pgd".into(),
                    config: attack_cfg(LossSurface::Deep, StepMethod::Pgd),
                    inner_space: InnerSpace::Feature,
                },
                LabeledAttack {
                    label: "shallow-pgd".into(),
                    config: attack_cfg(LossSurface::Shallow, StepMethod::Pgd),
                    inner_space: InnerSpace::Feature,
                },
                LabeledAttack {
                    label: "etf-pgd".into(),
                    config: attack_cfg(LossSurface::Etf, StepMethod::Pgd),
                    inner_space: InnerSpace::Feature,
                },
            ],
            seeds: BENCH_SEEDS.to_vec(),
            few_shot: Some(&manifest),
            out_dir: Some(workdir.join("bench")),
        })
        .expect("matrix");
        let bench_attack_seconds = t0.elapsed().as_secs_f64();
        eprintln!("[pipeline] matrix done in {bench_attack_seconds:.0}s");
        let report_json = evalbench::to_json(&report);
        let report_csv = evalbench::to_csv(&report);

        Pipeline {
            workdir,
            test_set,
            few_shot,
            manifest,
            surrogate,
            registry,
            clean_test_accs,
            report,
            report_json,
            report_csv,
            bench_attack_seconds,
            guides,
        }
    })
}

fn sub_sample(set: &SampleSet, n: usize) -> SampleSet {
    let stride = (set.len() / n).max(1);
    let positions: Vec<usize> = (0..set.len()).step_by(stride).take(n).collect();
    set.select(&positions).expect("subset")
}

fn batch_from(sources: &SampleSet, guides: &[usize], pool: &SampleSet) -> AttackBatch {
    let (c, h, w) = sources.dims();
    let chw = c * h * w;
    let mut gdata = Vec::with_capacity(guides.len() * chw);
    for &g in guides {
        gdata.extend_from_slice(pool.image(g));
    }
    AttackBatch {
        sources: sources.images.clone(),
        labels: sources.labels.clone(),
        guides: Some(Tensor::new(vec![guides.len(), c, h, w], gdata).unwrap()),
        source_indices: (0..sources.len() as u32).collect(),
        guide_indices: Some(guides.iter().map(|&g| g as u32).collect()),
    }
}

// ---- criteria ----

#[test]
fn criterion_1_gradient_correctness() {
    let t0 = Instant::now();
    let worst = lbba::gradcheck::run_battery(SURROGATE_WIDTH).expect("battery runs");
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst < 1e-3 && secs < 120.0;
    println!(
        "[criterion 1] {}: finite-difference suite worst rel err {worst:.3e} (< 1e-3), runtime {secs:.1}s (< 120s)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(worst < 1e-3, "worst relative error {worst}");
    assert!(secs < 120.0, "suite took {secs}s");
}

#[test]
fn criterion_2_error_transform_identity() {
    use nets::{verify_error_transform_identity, IdentitySubject, LinearFirstNet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    let mut worst = 0f32;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + seed);
        let d0 = rng.random_range(4..16usize);
        let d1 = rng.random_range(4..20usize);
        let d2 = rng.random_range(3..12usize);
        let net = LinearFirstNet::build(&[d0, d1, d2], seed).unwrap();
        let n = rng.random_range(1..6usize);
        let x = Tensor::new(vec![n, d0], (0..n * d0).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap();
        let a = Tensor::new(vec![d0, d0], (0..d0 * d0).map(|_| rng.random_range(-0.5f32..0.5)).collect()).unwrap();
        let diff = verify_error_transform_identity(IdentitySubject::Linear(&net), &x, &a).unwrap();
        worst = worst.max(diff);
    }
    let pass = worst < 1e-5;
    println!(
        "[criterion 2] {}: error-transform identity worst |diff| {worst:.3e} over 50 random linear-first-layer instances (< 1e-5)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "worst diff {worst}");
}

#[test]
fn criterion_3_constraint_properties() {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let spec = NetworkSpec::new(Family::SimplifiedResnet18, (3, 16, 16), 4, 4).unwrap();
    let models: Vec<Model> = (0..4).map(|s| Model::build(&spec, 900 + s).unwrap()).collect();
    let surfaces = [LossSurface::Deep, LossSurface::Shallow, LossSurface::Etf, LossSurface::EtfAll];
    let methods = [StepMethod::Pgd, StepMethod::Mi, StepMethod::Di, StepMethod::Ti];
    let norms = [NormKind::Linf, NormKind::L2];

    let mut runs = 0usize;
    let mut worst_eps = 0f32;
    let mut worst_box = 0f32;
    let mut worst_tau = 0f32;
    for i in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(31337 + i);
        let model = &models[(i % 4) as usize];
        let n = rng.random_range(1..4usize);
        let len = n * 3 * 16 * 16;
        let sources =
            Tensor::new(vec![n, 3, 16, 16], (0..len).map(|_| rng.random_range(0.0f32..1.0)).collect()).unwrap();
        let guides =
            Tensor::new(vec![n, 3, 16, 16], (0..len).map(|_| rng.random_range(0.0f32..1.0)).collect()).unwrap();
        let batch = AttackBatch {
            sources,
            labels: Some((0..n as u32).map(|k| k % 4).collect()),
            guides: Some(guides),
            source_indices: (0..n as u32).collect(),
            guide_indices: Some((0..n as u32).collect()),
        };
        let mut cfg = AttackConfig::new(
            surfaces[rng.random_range(0..surfaces.len())],
            methods[rng.random_range(0..methods.len())],
            0.0,
        );
        cfg.norm = norms[rng.random_range(0..norms.len())];
        cfg.eps = match cfg.norm {
            NormKind::Linf => rng.random_range(0.02f32..0.15),
            NormKind::L2 => rng.random_range(0.5f32..2.5),
        };
        cfg.steps = rng.random_range(2..5usize);
        cfg.inner_steps = rng.random_range(1..4usize);
        cfg.seed = i;
        cfg.batch_size = 2;
        let out = attackkit::run_attack(model, &batch, &cfg).unwrap();
        for s in &out.steps {
            worst_eps = worst_eps.max(s.max_eps_violation);
            worst_box = worst_box.max(s.max_box_violation);
            worst_tau = worst_tau.max(s.max_tau_violation);
            if let (Some(i0), Some(i1)) = (s.inner_initial, s.inner_final) {
                assert!(i1 >= i0, "inner objective decreased");
            }
        }
        runs += 1;
    }
    assert_eq!(runs, 1000);
    let constraint_pass = worst_eps <= 1e-6 && worst_box <= 1e-6 && worst_tau <= 1e-6;

    // eps = 0 is exactly the identity.
    let model = &models[0];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let len = 2 * 3 * 16 * 16;
    let sources =
        Tensor::new(vec![2, 3, 16, 16], (0..len).map(|_| rng.random_range(0.0f32..1.0)).collect()).unwrap();
    let batch = AttackBatch {
        sources: sources.clone(),
        labels: Some(vec![0, 1]),
        guides: Some(sources.clone()),
        source_indices: vec![0, 1],
        guide_indices: Some(vec![1, 0]),
    };
    let idcfg = AttackConfig::new(LossSurface::Etf, StepMethod::Pgd, 0.0);
    let out = attackkit::run_attack(model, &batch, &idcfg).unwrap();
    let identity_pass = out.x_adv.data() == sources.data();

    // tau = 0 makes the etf trajectory bit-identical to shallow.
    let mut shallow = AttackConfig::new(LossSurface::Shallow, StepMethod::Pgd, 0.1);
    shallow.metric = attackkit::FeatureMetric::ContrastiveCos;
    shallow.steps = 6;
    let mut etf0 = AttackConfig::new(LossSurface::Etf, StepMethod::Pgd, 0.1);
    etf0.tau = Some(0.0);
    etf0.steps = 6;
    let a = attackkit::run_attack(model, &batch, &shallow).unwrap();
    let b = attackkit::run_attack(model, &batch, &etf0).unwrap();
    let bit_identical = a.x_adv.data().iter().zip(b.x_adv.data()).all(|(x, y)| x.to_bits() == y.to_bits());

    let pass = constraint_pass && identity_pass && bit_identical;
    println!(
        "[criterion 3] {}: 1000 randomized runs, worst violations eps {worst_eps:.1e} box {worst_box:.1e} tau {worst_tau:.1e} (<= 1e-6); eps=0 identity {identity_pass}; tau=0 bit-identical {bit_identical}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass);
}

#[test]
fn criterion_4_whitebox_sanity() {
    let p = pipeline();
    let labels = p.few_shot.labels.clone().unwrap();
    let before = top1_accuracy(&p.surrogate, &p.few_shot.images, &labels).unwrap();
    let mut cfg = attack_cfg(LossSurface::Deep, StepMethod::Pgd);
    cfg.seed = BENCH_SEEDS[0];
    let batch = batch_from(&p.few_shot, &p.guides, &p.few_shot);
    let out = attackkit::run_attack(&p.surrogate, &batch, &cfg).unwrap();
    let after = top1_accuracy(&p.surrogate, &out.x_adv, &labels).unwrap();
    let pass = after <= 5.0;
    println!(
        "[criterion 4] {}: white-box deep-pgd drives the surrogate from {before:.2}% to {after:.2}% on its few-shot set (<= 5%)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "white-box accuracy {after}");
}

#[test]
fn criterion_5_desk_scale_bench() {
    let p = pipeline();
    let clean_avg = p.report.clean_average();
    let deep = p.report.average_of("deep-pgd").unwrap();
    let shallow = p.report.average_of("shallow-pgd").unwrap();
    let etf = p.report.average_of("etf-pgd").unwrap();
    let min_clean_test = p.clean_test_accs.iter().map(|(_, a)| *a).fold(f32::INFINITY, f32::min);

    let ordering = etf <= shallow - 3.0 && shallow <= deep - 10.0;
    let pass = ordering && etf <= 40.0 && clean_avg >= 80.0 && min_clean_test >= 80.0;
    println!(
        "[criterion 5] {}: clean test accs {:?} (all >= 80); eval-set clean avg {clean_avg:.2} (>= 80); deep {deep:.2} / shallow {shallow:.2} / etf {etf:.2} (etf <= shallow-3 <= deep-13), etf <= 40; attack+eval wall {:.0}s on {} cores",
        if pass { "PASS" } else { "FAIL" },
        p.clean_test_accs,
        p.bench_attack_seconds,
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    );
    assert!(min_clean_test >= 80.0, "a target is below 80% clean test accuracy: {:?}", p.clean_test_accs);
    assert!(clean_avg >= 80.0, "clean average {clean_avg}");
    assert!(etf <= shallow - 3.0, "etf {etf} vs shallow {shallow}: margin < 3");
    assert!(shallow <= deep - 10.0, "shallow {shallow} vs deep {deep}: margin < 10");
    assert!(etf <= 40.0, "etf average {etf}");
}

#[test]
fn criterion_6_ablation_directions() {
    let p = pipeline();
    let sources = sub_sample(&p.few_shot, ABLATION_EXAMPLES);
    let guide_all = &p.guides;
    let stride = (p.few_shot.len() / ABLATION_EXAMPLES).max(1);
    let guides: Vec<usize> = (0..p.few_shot.len()).step_by(stride).take(ABLATION_EXAMPLES).map(|i| guide_all[i]).collect();

    let spec = NetworkSpec::new(Family::SimplifiedResnet18, (3, 32, 32), 10, SURROGATE_WIDTH).unwrap();
    let tc = train_cfg();

    let row = |label: &str, surrogate: &Model, cfg: &AttackConfig, inner: InnerSpace| -> f32 {
        let report = run_matrix(&MatrixJob {
            surrogate,
            sources: &sources,
            guide_pool: &p.few_shot,
            guides: guides.clone(),
            registry: &p.registry,
            attacks: vec![LabeledAttack { label: label.into(), config: cfg.clone(), inner_space: inner }],
            seeds: BENCH_SEEDS.to_vec(),
            few_shot: Some(&p.manifest),
            out_dir: Some(p.workdir.join("ablations").join(label)),
        })
        .expect("ablation row");
        report.averages[0].1
    };
    let etf = attack_cfg(LossSurface::Etf, StepMethod::Pgd);

    let baseline = row("baseline-etf", &p.surrogate, &etf, InnerSpace::Feature);

    // (a) augmentation off
    let noaug_model = load_or_train_surrogate(
        &p.workdir.join("surrogate-noaug.lbba"),
        &spec,
        tc.epochs,
        tc.seed,
        || {
            eprintln!("[ablation] training no-aug surrogate");
            let mut cfg = tc.clone();
            cfg.augmentation = datapipe::AugmentationPolicy::disabled();
            let mut m = Model::build(&spec, cfg.seed).unwrap();
            train_supervised(&mut m, &p.few_shot, &cfg).unwrap();
            m
        },
    );
    let noaug = row("noaug-etf", &noaug_model, &etf, InnerSpace::Feature);

    // (b) contrastive surrogate
    let contrastive_model = load_or_train_surrogate(
        &p.workdir.join("surrogate-contrastive.lbba"),
        &spec,
        tc.epochs,
        tc.seed,
        || {
            eprintln!("[ablation] training contrastive surrogate");
            let mut m = Model::build(&spec, tc.seed).unwrap();
            train_contrastive(&mut m, &p.few_shot, &tc).unwrap();
            m
        },
    );
    let contrastive = row("contrastive-etf", &contrastive_model, &etf, InnerSpace::Feature);

    // (c) rotation surrogate
    let rot_spec = {
        let mut s = spec.clone();
        s.num_classes = 4;
        s
    };
    let rotation_model = load_or_train_surrogate(
        &p.workdir.join("surrogate-rotation.lbba"),
        &rot_spec,
        tc.epochs,
        tc.seed,
        || {
            eprintln!("[ablation] training rotation surrogate");
            let mut m = Model::build(&rot_spec, tc.seed).unwrap();
            train_rotation(&mut m, &p.few_shot, &tc).unwrap();
            m
        },
    );
    let rotation = row("rotation-etf", &rotation_model, &etf, InnerSpace::Feature);

    // (d) weight-space inner max
    let weight_space = row("weight-space-etf", &p.surrogate, &etf, InnerSpace::Weight);

    // etf applied to all sites below the cut (directional report row)
    let mut etf_all_cfg = etf.clone();
    etf_all_cfg.surface = LossSurface::EtfAll;
    let etf_all = row("etf-all", &p.surrogate, &etf_all_cfg, InnerSpace::Feature);

    // (e) layer sweep: block1 vs fc under the shared surrogate
    let sweep_sources = sub_sample(&p.few_shot, LAYER_SWEEP_EXAMPLES);
    let sweep_manifest = datapipe::manifest_for(&sweep_sources, SURROGATE_SEED);
    let sweep = evalbench::sweep_layers(
        &p.surrogate,
        &sweep_sources,
        &sweep_manifest,
        &p.registry,
        &etf,
        &BENCH_SEEDS,
        &[TruncationPoint::Block1, TruncationPoint::Block2, TruncationPoint::Block3, TruncationPoint::Fc],
        Some(&p.workdir.join("sweeps")),
    )
    .expect("layer sweep");
    let block1_acc = sweep.points.iter().find(|q| q.at == TruncationPoint::Block1).unwrap().avg_adv_acc;
    let fc_acc = sweep.points.iter().find(|q| q.at == TruncationPoint::Fc).unwrap().avg_adv_acc;

    // (f) sample sweep: n=10 vs the n=1000 bench point
    let small = evalbench::sweep_samples(
        &p.test_set,
        &p.registry,
        &spec,
        &tc,
        &etf,
        &BENCH_SEEDS,
        &[10],
        Some(&p.workdir.join("sweeps")),
    )
    .expect("sample sweep");
    let n10 = small[0].avg_adv_acc;
    let n1000 = p.report.average_of("etf-pgd").unwrap();

    let a_pass = noaug >= baseline + 5.0;
    let b_pass = (contrastive - baseline).abs() <= 5.0;
    let clean_avg = p.report.clean_average();
    let c_pass = (rotation - baseline).abs() <= 8.0 && rotation <= clean_avg - 25.0;
    let d_pass = weight_space >= baseline + 3.0;
    let e_pass = block1_acc <= fc_acc - 10.0;
    let f_pass = n1000 < n10;
    let pass = a_pass && b_pass && c_pass && d_pass && e_pass && f_pass;
    println!(
        "[criterion 6] {}: baseline {baseline:.2} | (a) no-aug {noaug:.2} (>= +5: {a_pass}) | (b) contrastive {contrastive:.2} (within 5: {b_pass}) | (c) rotation {rotation:.2} (within 8 and <= clean-25: {c_pass}) | (d) weight-space {weight_space:.2} (>= +3: {d_pass}) | (e) block1 {block1_acc:.2} vs fc {fc_acc:.2} (>= 10 apart: {e_pass}) | (f) n=1000 {n1000:.2} < n=10 {n10:.2}: {f_pass} | etf-all {etf_all:.2} (report row)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(a_pass, "no-aug degradation only {:.2}", noaug - baseline);
    assert!(b_pass, "contrastive gap {:.2}", contrastive - baseline);
    assert!(c_pass, "rotation {rotation:.2} vs baseline {baseline:.2}, clean {clean_avg:.2}");
    assert!(d_pass, "weight-space gap {:.2}", weight_space - baseline);
    assert!(e_pass, "layer margin {:.2}", fc_acc - block1_acc);
    assert!(f_pass, "sample sweep direction violated");
}

#[test]
fn criterion_7_l2_mode() {
    let p = pipeline();
    let eps2 = l2_eps_for((3, 32, 32));

    // Exactness of the projection at the budget.
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_excess = 0f32;
    let mut hit = 0usize;
    for _ in 0..50 {
        let mut delta: Vec<f32> = (0..3072).map(|_| rng.random_range(-0.3f32..0.3)).collect();
        let pre = tensorcore::kernels::dot(&delta, &delta).sqrt();
        attackkit::project_delta(&mut delta, eps2, NormKind::L2);
        let post = tensorcore::kernels::dot(&delta, &delta).sqrt();
        assert!(post <= eps2 * (1.0 + 1e-6) + 1e-6);
        if pre > eps2 {
            hit += 1;
            worst_excess = worst_excess.max((post - eps2).abs());
        }
    }

    // ETF-PGD under the l2 budget on a bench subset.
    let sources = sub_sample(&p.few_shot, ABLATION_EXAMPLES);
    let stride = (p.few_shot.len() / ABLATION_EXAMPLES).max(1);
    let guides: Vec<usize> =
        (0..p.few_shot.len()).step_by(stride).take(ABLATION_EXAMPLES).map(|i| p.guides[i]).collect();
    let mut cfg = attack_cfg(LossSurface::Etf, StepMethod::Pgd);
    cfg.norm = NormKind::L2;
    cfg.eps = eps2;
    cfg.tau = Some(eps2 / 2.0);
    cfg.seed = BENCH_SEEDS[0];
    let batch = batch_from(&sources, &guides, &p.few_shot);
    let out = attackkit::run_attack(&p.surrogate, &batch, &cfg).unwrap();
    for s in &out.steps {
        assert!(s.max_eps_violation <= 1e-6 && s.max_box_violation <= 1e-6);
    }
    let labels = sources.labels.clone().unwrap();
    let mut adv_acc = Vec::new();
    for entry in &p.registry.targets {
        let model = p.registry.load_model(&entry.name).unwrap();
        adv_acc.push(top1_accuracy(&model, &out.x_adv, &labels).unwrap());
    }
    let adv_avg = adv_acc.iter().sum::<f32>() / adv_acc.len() as f32;
    let clean_avg = p.report.clean_average();
    let degraded = clean_avg - adv_avg;
    let pass = hit > 0 && worst_excess <= 1e-4 && degraded >= 15.0;
    println!(
        "[criterion 7] {}: l2 eps {eps2:.4}; {hit} overshoot projections land on the sphere within {worst_excess:.2e}; etf-pgd(l2) degrades clean {clean_avg:.2} -> {adv_avg:.2} ({degraded:.2} >= 15 points)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(hit > 0 && worst_excess <= 1e-4, "projection exactness");
    assert!(degraded >= 15.0, "l2 degradation {degraded:.2}");
}

#[test]
fn criterion_8_determinism() {
    let p = pipeline();
    eprintln!("[criterion 8] repeating the criterion-5 matrix with identical seeds");
    let report2 = run_matrix(&MatrixJob {
        surrogate: &p.surrogate,
        sources: &p.few_shot,
        guide_pool: &p.few_shot,
        guides: p.guides.clone(),
        registry: &p.registry,
        attacks: vec![
            LabeledAttack {
                label: "deep-pgd".into(),
                config: attack_cfg(LossSurface::Deep, StepMethod::Pgd),
                inner_space: InnerSpace::Feature,
            },
            LabeledAttack {
                label: "shallow-pgd".into(),
                config: attack_cfg(LossSurface::Shallow, StepMethod::Pgd),
                inner_space: InnerSpace::Feature,
            },
            LabeledAttack {
                label: "etf-pgd".into(),
                config: attack_cfg(LossSurface::Etf, StepMethod::Pgd),
                inner_space: InnerSpace::Feature,
            },
        ],
        seeds: BENCH_SEEDS.to_vec(),
        few_shot: Some(&p.manifest),
        out_dir: Some(p.workdir.join("bench-repeat")),
    })
    .expect("repeat matrix");
    let json2 = evalbench::to_json(&report2);
    let csv2 = evalbench::to_csv(&report2);
    let pass = json2 == p.report_json && csv2 == p.report_csv;
    println!(
        "[criterion 8] {}: repeated bench report is byte-identical (json {} bytes, csv {} bytes)",
        if pass { "PASS" } else { "FAIL" },
        json2.len(),
        csv2.len()
    );
    assert!(json2 == p.report_json, "JSON reports differ");
    assert!(csv2 == p.report_csv, "CSV reports differ");
}

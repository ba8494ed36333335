use attackkit::{select_guides, AttackConfig, GuideStrategy, InnerSpace, LossSurface, StepMethod};
use datapipe::FewShotManifest;
use evalbench::{run_matrix, LabeledAttack, MatrixJob, TargetRegistry};
use std::path::Path;

fn main() {
    let (_, test) = datapipe::load_cifar10_binary(Path::new("/root/data/cifar10")).unwrap();
    let surrogate = nets::load_checkpoint(Path::new("/tmp/probe_sur/run/surrogates/supervised.lbba")).unwrap();
    let manifest = FewShotManifest::load(Path::new("/tmp/probe_sur/run/surrogates/supervised.fewshot.json")).unwrap();
    let positions: Vec<usize> = manifest.indices.iter().map(|&i| i as usize).collect();
    let mut few_shot = test.select(&positions).unwrap();
    few_shot.provenance.selection_seed = Some(manifest.seed);

    // subsample 200
    let stride = few_shot.len() / 200;
    let sub_positions: Vec<usize> = (0..few_shot.len()).step_by(stride).take(200).collect();
    let sources = few_shot.select(&sub_positions).unwrap();

    let mut registry = TargetRegistry::default();
    registry.add("rn20-cal", "/tmp/cal_rn20/run/targets/resnet20-target.lbba".into()).unwrap();

    let guides_all = select_guides(&(0..few_shot.len()).collect::<Vec<_>>(), &few_shot, GuideStrategy::RandomDiffLabel, None, 7).unwrap();
    let guides: Vec<usize> = sub_positions.iter().map(|&i| guides_all[i]).collect();

    let mk = |label: &str, surface: LossSurface| LabeledAttack {
        label: label.into(),
        config: AttackConfig::new(surface, StepMethod::Pgd, 0.1),
        inner_space: InnerSpace::Feature,
    };
    let mut attacks = vec![mk("deep", LossSurface::Deep), mk("shallow-mse", LossSurface::Shallow)];
    {
        let mut a = mk("shallow-stem", LossSurface::Shallow);
        a.config.truncation = nets::TruncationPoint::Stem;
        attacks.push(a);
    }
    attacks.push(mk("etf-cos-t.05", LossSurface::Etf));
    {
        let mut a = mk("etf-cos-t.025", LossSurface::Etf);
        a.config.tau = Some(0.025);
        attacks.push(a);
    }
    {
        let mut a = mk("etf-mse-t.05", LossSurface::Etf);
        a.config.metric = attackkit::FeatureMetric::Mse;
        attacks.push(a);
    }
    {
        let mut a = mk("etf-mse-t.1", LossSurface::Etf);
        a.config.metric = attackkit::FeatureMetric::Mse;
        a.config.tau = Some(0.1);
        attacks.push(a);
    }
    {
        let mut a = mk("etf-mse-stem", LossSurface::Etf);
        a.config.metric = attackkit::FeatureMetric::Mse;
        a.config.truncation = nets::TruncationPoint::Stem;
        attacks.push(a);
    }
    let t0 = std::time::Instant::now();
    let report = run_matrix(&MatrixJob {
        surrogate: &surrogate,
        sources: &sources,
        guide_pool: &few_shot,
        guides,
        registry: &registry,
        attacks,
        seeds: vec![11],
        few_shot: Some(&manifest),
        out_dir: None,
    }).unwrap();
    println!("clean fewshot avg: {:.2}", report.clean_average());
    for (l, m, _) in &report.averages {
        println!("{l}: {m:.2}");
    }
    println!("probe wall: {:.0}s", t0.elapsed().as_secs_f64());
}

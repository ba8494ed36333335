//! Forward-pass contracts: shapes, determinism, truncation consistency,
//! perturbed forwards, and eval-mode purity.

use nets::{EvalOptions, Family, FeatureSite, Model, NetworkSpec, TruncationPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensorcore::{Tape, Tensor};

fn small_spec() -> NetworkSpec {
    NetworkSpec::new(Family::SimplifiedResnet18, (3, 32, 32), 10, 8).unwrap()
}

fn rand_batch(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    let len = n * 3 * 32 * 32;
    Tensor::new(vec![n, 3, 32, 32], (0..len).map(|_| rng.random_range(0.0f32..1.0)).collect()).unwrap()
}

#[test]
fn simplified_resnet18_has_four_residual_blocks() {
    let m = Model::build(&small_spec(), 1).unwrap();
    assert_eq!(m.residual_block_count(), 4);
}

#[test]
fn resnet20_has_nine_residual_blocks() {
    let spec = NetworkSpec::new(Family::Resnet20Target, (3, 32, 32), 10, 16).unwrap();
    let m = Model::build(&spec, 1).unwrap();
    assert_eq!(m.residual_block_count(), 9);
}

#[test]
fn same_seed_gives_identical_parameter_bytes() {
    let a = Model::build(&small_spec(), 7).unwrap();
    let b = Model::build(&small_spec(), 7).unwrap();
    assert!(a.store.bytes_equal(&b.store));
    let c = Model::build(&small_spec(), 8).unwrap();
    assert!(!a.store.bytes_equal(&c.store));
}

#[test]
fn simplified_capacity_below_two_block_resnet18() {
    // The one-block-per-stage surrogate must be strictly smaller than the
    // standard two-block layout at the same width.
    let one = Model::build(&small_spec(), 1).unwrap();
    let two = Model::build_resnet_variant(&small_spec(), 1, 2).unwrap();
    assert_eq!(two.residual_block_count(), 8);
    assert!(one.store.trainable_elements() < two.store.trainable_elements());
    assert!(one.store.idx("block1_2.conv1.w").is_err());
    assert!(two.store.idx("block1_2.conv1.w").is_ok());
}

#[test]
fn logits_shape_and_finiteness_on_zero_batch() {
    let m = Model::build(&small_spec(), 3).unwrap();
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(vec![2, 3, 32, 32]));
    let y = m.forward_logits(&mut tape, x).unwrap();
    assert_eq!(tape.value(y).shape(), &[2, 10]);
    assert!(tape.value(y).is_finite());
}

#[test]
fn eval_forward_is_deterministic_and_pure() {
    let m = Model::build(&small_spec(), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = rand_batch(&mut rng, 3);
    let run = || {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let y = m.forward_logits(&mut tape, xv).unwrap();
        tape.value(y).data().to_vec()
    };
    let a = run();
    let b = run();
    assert_eq!(a, b, "eval must be bit-deterministic");
}

#[test]
fn batch_permutation_permutes_logits_rows() {
    let m = Model::build(&small_spec(), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = rand_batch(&mut rng, 4);
    let forward = |t: &Tensor| {
        let mut tape = Tape::new();
        let xv = tape.constant(t.clone());
        let y = m.forward_logits(&mut tape, xv).unwrap();
        tape.value(y).data().to_vec()
    };
    let base = forward(&x);
    // reverse batch order
    let stride = 3 * 32 * 32;
    let mut rev = Tensor::zeros(vec![4, 3, 32, 32]);
    for i in 0..4 {
        rev.data_mut()[i * stride..(i + 1) * stride].copy_from_slice(&x.data()[(3 - i) * stride..(4 - i) * stride]);
    }
    let flipped = forward(&rev);
    for i in 0..4 {
        assert_eq!(&base[(3 - i) * 10..(4 - i) * 10], &flipped[i * 10..(i + 1) * 10]);
    }
}

#[test]
fn block1_feature_shape_matches_architecture() {
    // Width 64 at 32x32: block1 keeps spatial dims -> (n, 64, 32, 32).
    let spec = NetworkSpec::new(Family::SimplifiedResnet18, (3, 32, 32), 10, 64).unwrap();
    let m = Model::build(&spec, 1).unwrap();
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(vec![2, 3, 32, 32]));
    let f = m.forward_features(&mut tape, x, TruncationPoint::Block1).unwrap();
    assert_eq!(tape.value(f).shape(), &[2, 64, 32, 32]);
}

#[test]
fn fc_truncation_equals_forward_logits() {
    let m = Model::build(&small_spec(), 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = rand_batch(&mut rng, 2);
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let lf = m.forward_features(&mut tape, xv, TruncationPoint::Fc).unwrap();
    let ll = m.forward_logits(&mut tape, xv).unwrap();
    assert_eq!(tape.value(lf).data(), tape.value(ll).data());
}

#[test]
fn composition_through_truncation_matches_full_forward() {
    let m = Model::build(&small_spec(), 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = rand_batch(&mut rng, 2);
    for at in [TruncationPoint::Stem, TruncationPoint::Block1, TruncationPoint::Block3] {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let feat = m.forward_features(&mut tape, xv, at).unwrap();
        let resumed = m.forward_eval_from(&mut tape, feat, at).unwrap();
        let full = m.forward_logits(&mut tape, xv).unwrap();
        let d = tape.value(resumed).max_abs_diff(tape.value(full)).unwrap();
        assert!(d < 1e-6, "resume from {at}: diff {d}");
    }
}

#[test]
fn empty_perturbation_map_is_bit_identical() {
    let m = Model::build(&small_spec(), 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = rand_batch(&mut rng, 2);
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let a = m.forward_features(&mut tape, xv, TruncationPoint::Block2).unwrap();
    let b = m
        .forward_features_perturbed(&mut tape, xv, TruncationPoint::Block2, Vec::new())
        .unwrap();
    assert_eq!(tape.value(a).data(), tape.value(b).data());
}

#[test]
fn input_site_perturbation_equals_shifted_input() {
    let m = Model::build(&small_spec(), 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = rand_batch(&mut rng, 2);
    let delta =
        Tensor::new(vec![2, 3, 32, 32], (0..2 * 3 * 1024).map(|_| rng.random_range(-0.05f32..0.05)).collect())
            .unwrap();
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let dv = tape.constant(delta.clone());
    let pert = m
        .forward_features_perturbed(&mut tape, xv, TruncationPoint::Block1, vec![(FeatureSite::Input, dv)])
        .unwrap();
    let shifted_in = tape.add(xv, dv).unwrap();
    let direct = m.forward_features(&mut tape, shifted_in, TruncationPoint::Block1).unwrap();
    assert_eq!(tape.value(pert).data(), tape.value(direct).data());
}

#[test]
fn hidden_site_perturbation_matches_manual_two_stage_forward() {
    let m = Model::build(&small_spec(), 13).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = rand_batch(&mut rng, 2);
    // Delta at the stem output (2, 8, 32, 32).
    let dlen = 2 * 8 * 32 * 32;
    let delta =
        Tensor::new(vec![2, 8, 32, 32], (0..dlen).map(|_| rng.random_range(-0.05f32..0.05)).collect()).unwrap();

    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let dv = tape.constant(delta.clone());

    // Single perturbed forward to logits...
    let pert_fc = m
        .forward_eval(
            &mut tape,
            xv,
            &EvalOptions {
                truncation: None,
                perturbations: vec![(FeatureSite::Stage(TruncationPoint::Stem), dv)],
                ..Default::default()
            },
        )
        .unwrap();

    // ...equals splitting the forward at the stem and adding manually.
    let stem = m.forward_features(&mut tape, xv, TruncationPoint::Stem).unwrap();
    let shifted = tape.add(stem, dv).unwrap();
    let manual_fc = m.forward_eval_from(&mut tape, shifted, TruncationPoint::Stem).unwrap();

    let d = tape.value(pert_fc).max_abs_diff(tape.value(manual_fc)).unwrap();
    assert!(d < 1e-6, "two-stage forward differs by {d}");
}

#[test]
fn invalid_truncation_rejected() {
    let spec = NetworkSpec::new(Family::Resnet20Target, (3, 32, 32), 10, 16).unwrap();
    let m = Model::build(&spec, 1).unwrap();
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(vec![1, 3, 32, 32]));
    assert!(m.forward_features(&mut tape, x, TruncationPoint::Block4).is_err());
}

#[test]
fn all_families_produce_logits() {
    for family in [
        Family::SimplifiedResnet18,
        Family::VggSlim,
        Family::SenetSlim,
        Family::Resnet20Target,
        Family::Vgg11Target,
        Family::MobilenetLiteTarget,
    ] {
        let spec = NetworkSpec::new(family, (3, 32, 32), 10, 8).unwrap();
        let m = Model::build(&spec, 2).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(vec![2, 3, 32, 32], 0.5));
        let y = m.forward_logits(&mut tape, x).unwrap();
        assert_eq!(tape.value(y).shape(), &[2, 10], "{family}");
        assert!(tape.value(y).is_finite(), "{family}");
    }
}

#[test]
fn seven_by_seven_stem_path_works() {
    let spec = NetworkSpec::new(Family::SimplifiedResnet18, (3, 64, 64), 10, 8).unwrap();
    assert_eq!(spec.stem, nets::StemKind::Conv7x7Pool);
    let m = Model::build(&spec, 2).unwrap();
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::full(vec![1, 3, 64, 64], 0.3));
    let f = m.forward_features(&mut tape, x, TruncationPoint::Stem).unwrap();
    // 64 -> conv s2 -> 32 -> pool s2 -> 16
    assert_eq!(tape.value(f).shape(), &[1, 8, 16, 16]);
    let y = m.forward_logits(&mut tape, x).unwrap();
    assert_eq!(tape.value(y).shape(), &[1, 10]);
}

#[test]
fn train_forward_updates_running_stats_eval_does_not() {
    let mut m = Model::build(&small_spec(), 21).unwrap();
    let before = m.store.get("stem.bn.rmean").unwrap().data().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = rand_batch(&mut rng, 4);
    {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        m.forward_train(&mut tape, xv, None).unwrap();
    }
    let after = m.store.get("stem.bn.rmean").unwrap().data().to_vec();
    assert_ne!(before, after, "train pass must move running stats");

    let frozen = m.store.get("stem.bn.rmean").unwrap().data().to_vec();
    {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        m.forward_logits(&mut tape, xv).unwrap();
    }
    assert_eq!(frozen, m.store.get("stem.bn.rmean").unwrap().data().to_vec());
}

//! Property coverage: augmentation never changes shape or leaves [0,1],
//! and few-shot selection is a pure function of (set, n, seed).

use datapipe::{augment_image, augment_rng, sample_few_shot, AugmentationPolicy, FewShotSize};
use datapipe::{IndexSelection, Provenance, SampleSet};
use proptest::prelude::*;
use tensorcore::Tensor;

fn toy_set(n: usize) -> SampleSet {
    let mut img = Tensor::zeros(vec![n, 1, 2, 2]);
    for i in 0..n {
        img.data_mut()[i * 4] = (i as f32 / n as f32).min(1.0);
    }
    SampleSet::new(
        img,
        Some((0..n as u32).map(|i| i % 10).collect()),
        10,
        Provenance {
            dataset: "toy".into(),
            split: "test".into(),
            selection_seed: None,
            indices: IndexSelection::All(n),
        },
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn augmentation_preserves_shape_and_range(seed in 0u64..1000, idx in 0u64..100) {
        // A fixed textured image; randomness comes from the stream.
        let (h, w) = (12usize, 12usize);
        let img: Vec<f32> = (0..3*h*w).map(|i| ((i * 37) % 101) as f32 / 100.0).collect();
        let mut rng = augment_rng(seed, 0, 0, idx);
        let out = augment_image(&img, h, w, &AugmentationPolicy::default(), &mut rng);
        prop_assert_eq!(out.len(), 3 * h * w);
        prop_assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn few_shot_is_function_of_set_n_seed(seed in 0u64..500, n in 1usize..20) {
        let set = toy_set(200);
        let a = sample_few_shot(&set, FewShotSize::PerClass(n), seed).unwrap();
        let b = sample_few_shot(&set, FewShotSize::PerClass(n), seed).unwrap();
        prop_assert_eq!(&a.provenance.indices, &b.provenance.indices);
        prop_assert_eq!(a.len(), 10 * n);
    }
}

#[test]
fn ten_thousand_augmented_samples_stay_in_unit_range() {
    let (h, w) = (8usize, 8usize);
    let img: Vec<f32> = (0..3 * h * w).map(|i| ((i * 53) % 89) as f32 / 88.0).collect();
    let policy = AugmentationPolicy::default();
    for i in 0..10_000u64 {
        let mut rng = augment_rng(42, 0, i / 1000, i);
        let out = augment_image(&img, h, w, &policy, &mut rng);
        assert!(out.iter().all(|v| (0.0..=1.0).contains(v)), "sample {i} escaped [0,1]");
    }
}

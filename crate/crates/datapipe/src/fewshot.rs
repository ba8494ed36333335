//! Few-shot sampling: the attacker's entire world of samples.

use crate::error::{DataError, Result};
use crate::sampleset::{IndexSelection, SampleSet};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// How many samples to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FewShotSize {
    Total(usize),
    PerClass(usize),
}

/// Persisted next to every surrogate checkpoint for provenance checks.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FewShotManifest {
    pub dataset: String,
    pub split: String,
    pub seed: u64,
    pub indices: Vec<u32>,
    pub class_count: usize,
}

impl FewShotManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let json = serde_json::to_vec_pretty(self).expect("manifest serializes");
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|_| DataError::MissingFile { path: path.to_path_buf() })?;
        serde_json::from_slice(&bytes)
            .map_err(|e| DataError::Malformed { path: path.to_path_buf(), reason: e.to_string() })
    }

    pub fn to_provenance(&self) -> crate::sampleset::Provenance {
        crate::sampleset::Provenance {
            dataset: self.dataset.clone(),
            split: self.split.clone(),
            selection_seed: Some(self.seed),
            indices: IndexSelection::Subset(self.indices.clone()),
        }
    }
}

/// Deterministic selection of a few-shot set. Per-class mode draws exactly
/// `n` from every class; total mode draws uniformly without replacement.
pub fn sample_few_shot(set: &SampleSet, size: FewShotSize, seed: u64) -> Result<SampleSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions: Vec<usize> = match size {
        FewShotSize::Total(n) => {
            if n > set.len() {
                return Err(DataError::InsufficientSamples { requested: n, available: set.len() });
            }
            let mut all: Vec<usize> = (0..set.len()).collect();
            all.shuffle(&mut rng);
            let mut chosen = all[..n].to_vec();
            chosen.sort_unstable();
            chosen
        }
        FewShotSize::PerClass(n) => {
            let labels = set.labels.as_ref().ok_or(DataError::MissingLabels)?;
            let mut chosen = Vec::with_capacity(n * set.class_count);
            for class in 0..set.class_count as u32 {
                let mut of_class: Vec<usize> =
                    labels.iter().enumerate().filter(|(_, &l)| l == class).map(|(i, _)| i).collect();
                if of_class.len() < n {
                    return Err(DataError::InsufficientSamples { requested: n, available: of_class.len() });
                }
                of_class.shuffle(&mut rng);
                chosen.extend_from_slice(&of_class[..n]);
            }
            chosen.sort_unstable();
            chosen
        }
    };
    let mut out = set.select(&positions)?;
    out.provenance.selection_seed = Some(seed);
    Ok(out)
}

/// Build the persisted manifest for a selected few-shot set.
pub fn manifest_for(set: &SampleSet, seed: u64) -> FewShotManifest {
    let indices = match &set.provenance.indices {
        IndexSelection::All(n) => (0..*n as u32).collect(),
        IndexSelection::Subset(v) => v.clone(),
    };
    FewShotManifest {
        dataset: set.provenance.dataset.clone(),
        split: set.provenance.split.clone(),
        seed,
        indices,
        class_count: set.class_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampleset::Provenance;
    use tensorcore::Tensor;

    fn toy_set(n: usize, classes: usize) -> SampleSet {
        let mut img = Tensor::zeros(vec![n, 1, 2, 2]);
        for i in 0..n {
            img.data_mut()[i * 4] = i as f32 / n as f32;
        }
        let labels = (0..n as u32).map(|i| i % classes as u32).collect();
        SampleSet::new(
            img,
            Some(labels),
            classes,
            Provenance {
                dataset: "toy".into(),
                split: "test".into(),
                selection_seed: None,
                indices: IndexSelection::All(n),
            },
        )
        .unwrap()
    }

    #[test]
    fn per_class_mode_is_exactly_balanced() {
        let set = toy_set(1000, 10);
        let fs = sample_few_shot(&set, FewShotSize::PerClass(100), 7).unwrap();
        assert_eq!(fs.len(), 1000);
        let mut hist = [0usize; 10];
        for &l in fs.labels.as_ref().unwrap() {
            hist[l as usize] += 1;
        }
        assert!(hist.iter().all(|&c| c == 100));
    }

    #[test]
    fn one_per_class_yields_class_count_samples() {
        let set = toy_set(200, 10);
        let fs = sample_few_shot(&set, FewShotSize::PerClass(1), 3).unwrap();
        assert_eq!(fs.len(), 10);
        let mut labels: Vec<u32> = fs.labels.clone().unwrap();
        labels.sort_unstable();
        assert_eq!(labels, (0..10).collect::<Vec<u32>>());
    }

    #[test]
    fn same_seed_same_indices() {
        let set = toy_set(300, 10);
        let a = sample_few_shot(&set, FewShotSize::PerClass(5), 11).unwrap();
        let b = sample_few_shot(&set, FewShotSize::PerClass(5), 11).unwrap();
        assert_eq!(a.provenance.indices, b.provenance.indices);
        let c = sample_few_shot(&set, FewShotSize::PerClass(5), 12).unwrap();
        assert_ne!(a.provenance.indices, c.provenance.indices);
    }

    #[test]
    fn insufficient_is_error() {
        let set = toy_set(20, 10);
        assert!(matches!(
            sample_few_shot(&set, FewShotSize::PerClass(3), 0),
            Err(DataError::InsufficientSamples { .. })
        ));
        assert!(matches!(
            sample_few_shot(&set, FewShotSize::Total(21), 0),
            Err(DataError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let set = toy_set(100, 10);
        let fs = sample_few_shot(&set, FewShotSize::PerClass(2), 5).unwrap();
        let m = manifest_for(&fs, 5);
        let path = dir.path().join("fewshot.json");
        m.save(&path).unwrap();
        let loaded = FewShotManifest::load(&path).unwrap();
        assert_eq!(m, loaded);
        assert_eq!(loaded.indices.len(), 20);
    }
}

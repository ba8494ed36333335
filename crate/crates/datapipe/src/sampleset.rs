//! Immutable image collections with provenance tags.

use crate::error::{DataError, Result};
use serde::{Deserialize, Serialize};
use tensorcore::Tensor;

/// Which records of the source split a set holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndexSelection {
    /// The entire split of the given size.
    All(usize),
    /// An explicit subset (source-split indices).
    Subset(Vec<u32>),
}

impl IndexSelection {
    pub fn len(&self) -> usize {
        match self {
            IndexSelection::All(n) => *n,
            IndexSelection::Subset(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, idx: u32) -> bool {
        match self {
            IndexSelection::All(n) => (idx as usize) < *n,
            IndexSelection::Subset(v) => v.contains(&idx),
        }
    }
}

/// Where a sample set came from; the attacker/defender separation is
/// enforced by comparing these tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset: String,
    pub split: String,
    pub selection_seed: Option<u64>,
    pub indices: IndexSelection,
}

impl Provenance {
    /// True when two sets share at least one physical record.
    pub fn overlaps(&self, other: &Provenance) -> bool {
        if self.dataset != other.dataset || self.split != other.split {
            return false;
        }
        match (&self.indices, &other.indices) {
            (IndexSelection::All(a), IndexSelection::All(b)) => *a > 0 && *b > 0,
            (IndexSelection::All(_), IndexSelection::Subset(v))
            | (IndexSelection::Subset(v), IndexSelection::All(_)) => !v.is_empty(),
            (IndexSelection::Subset(a), IndexSelection::Subset(b)) => {
                let set: std::collections::HashSet<u32> = a.iter().copied().collect();
                b.iter().any(|i| set.contains(i))
            }
        }
    }

    pub fn fingerprint(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("provenance serializes");
        tensorcore::hash::fnv1a64(&json)
    }
}

/// Images in `[0,1]`, shape (N,C,H,W), with optional labels.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub images: Tensor,
    pub labels: Option<Vec<u32>>,
    pub class_count: usize,
    pub provenance: Provenance,
}

impl SampleSet {
    pub fn new(
        images: Tensor,
        labels: Option<Vec<u32>>,
        class_count: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        let (n, _, _, _) = images.dims4()?;
        if let Some(ls) = &labels {
            if ls.len() != n {
                return Err(DataError::Invalid(format!("{} labels for {} images", ls.len(), n)));
            }
            if let Some(bad) = ls.iter().find(|&&l| l as usize >= class_count) {
                return Err(DataError::Invalid(format!("label {bad} out of range [0, {class_count})")));
            }
        }
        if images.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(DataError::Invalid("pixel values must lie in [0,1]".into()));
        }
        Ok(Self { images, labels, class_count, provenance })
    }

    pub fn len(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.images.shape();
        (s[1], s[2], s[3])
    }

    /// One image as a flat slice (C*H*W).
    pub fn image(&self, i: usize) -> &[f32] {
        let chw: usize = self.images.shape()[1..].iter().product();
        &self.images.data()[i * chw..(i + 1) * chw]
    }

    pub fn label(&self, i: usize) -> Option<u32> {
        self.labels.as_ref().map(|l| l[i])
    }

    /// Copy a subset by position; provenance indices follow.
    pub fn select(&self, positions: &[usize]) -> Result<SampleSet> {
        let (c, h, w) = self.dims();
        let chw = c * h * w;
        let mut data = Vec::with_capacity(positions.len() * chw);
        for &p in positions {
            if p >= self.len() {
                return Err(DataError::Invalid(format!("position {p} out of bounds")));
            }
            data.extend_from_slice(self.image(p));
        }
        let labels = self.labels.as_ref().map(|ls| positions.iter().map(|&p| ls[p]).collect());
        let source_indices: Vec<u32> = match &self.provenance.indices {
            IndexSelection::All(_) => positions.iter().map(|&p| p as u32).collect(),
            IndexSelection::Subset(v) => positions.iter().map(|&p| v[p]).collect(),
        };
        SampleSet::new(
            Tensor::new(vec![positions.len(), c, h, w], data)?,
            labels,
            self.class_count,
            Provenance {
                dataset: self.provenance.dataset.clone(),
                split: self.provenance.split.clone(),
                selection_seed: self.provenance.selection_seed,
                indices: IndexSelection::Subset(source_indices),
            },
        )
    }
}

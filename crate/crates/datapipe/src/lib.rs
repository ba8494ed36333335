//! Dataset ingestion, few-shot sampling, and the augmentation pipeline.

pub mod augment;
pub mod cifar;
pub mod error;
pub mod fewshot;
pub mod folder;
pub mod sampleset;

pub use augment::{augment_batch, augment_batch_two_views, augment_image, augment_rng, rotate90, two_views, AugmentationPolicy};
pub use cifar::load_cifar10_binary;
pub use error::{DataError, Result};
pub use fewshot::{manifest_for, sample_few_shot, FewShotManifest, FewShotSize};
pub use folder::load_folder_dataset;
pub use sampleset::{IndexSelection, Provenance, SampleSet};

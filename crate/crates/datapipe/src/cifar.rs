//! CIFAR-10 binary batch ingestion (3073-byte records: label byte followed
//! by 1024-byte R, G, B planes).

use crate::error::{DataError, Result};
use crate::sampleset::{IndexSelection, Provenance, SampleSet};
use std::path::Path;
use tensorcore::Tensor;

const RECORD: usize = 3073;
const PIXELS: usize = 3072;
const PER_FILE: usize = 10000;

fn load_file(path: &Path, images: &mut Vec<f32>, labels: &mut Vec<u32>) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|_| DataError::MissingFile { path: path.to_path_buf() })?;
    if bytes.len() != RECORD * PER_FILE {
        return Err(DataError::Malformed {
            path: path.to_path_buf(),
            reason: format!("expected {} bytes, found {}", RECORD * PER_FILE, bytes.len()),
        });
    }
    for rec in bytes.chunks_exact(RECORD) {
        let label = rec[0];
        if label > 9 {
            return Err(DataError::Malformed {
                path: path.to_path_buf(),
                reason: format!("label byte {label} out of range"),
            });
        }
        labels.push(label as u32);
        images.extend(rec[1..=PIXELS].iter().map(|&b| b as f32 / 255.0));
    }
    Ok(())
}

/// Load the standard six-file layout from `dir` (accepts either the files
/// directly or a `cifar-10-batches-bin` subdirectory).
pub fn load_cifar10_binary(dir: &Path) -> Result<(SampleSet, SampleSet)> {
    let base = if dir.join("data_batch_1.bin").exists() {
        dir.to_path_buf()
    } else {
        dir.join("cifar-10-batches-bin")
    };
    let mut train_images = Vec::with_capacity(50000 * PIXELS);
    let mut train_labels = Vec::with_capacity(50000);
    for i in 1..=5 {
        load_file(&base.join(format!("data_batch_{i}.bin")), &mut train_images, &mut train_labels)?;
    }
    let mut test_images = Vec::with_capacity(10000 * PIXELS);
    let mut test_labels = Vec::with_capacity(10000);
    load_file(&base.join("test_batch.bin"), &mut test_images, &mut test_labels)?;

    let train = SampleSet::new(
        Tensor::new(vec![50000, 3, 32, 32], train_images)?,
        Some(train_labels),
        10,
        Provenance {
            dataset: "cifar10".into(),
            split: "train".into(),
            selection_seed: None,
            indices: IndexSelection::All(50000),
        },
    )?;
    let test = SampleSet::new(
        Tensor::new(vec![10000, 3, 32, 32], test_images)?,
        Some(test_labels),
        10,
        Provenance {
            dataset: "cifar10".into(),
            split: "test".into(),
            selection_seed: None,
            indices: IndexSelection::All(10000),
        },
    )?;
    Ok((train, test))
}

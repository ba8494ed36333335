//! Checkpoint container: magic "LBBA", u32 version, JSON manifest, then a
//! little-endian f32 payload with every tensor offset 64-byte aligned.

use crate::error::{NetError, Result};
use crate::model::Model;
use crate::params::{ParameterStore, StoreMeta};
use crate::spec::NetworkSpec;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"LBBA";
pub const VERSION: u32 = 1;
const ALIGN: u64 = 64;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Absolute byte offset of this tensor's payload in the file.
    offset: u64,
    /// Element count.
    len: u64,
    trainable: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    spec: NetworkSpec,
    spec_hash: u64,
    seed: u64,
    epoch: u32,
    tensors: Vec<TensorEntry>,
}

fn align_up(v: u64) -> u64 {
    v.div_ceil(ALIGN) * ALIGN
}

/// Serialize a model; the byte stream is a pure function of its contents.
pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut entries = Vec::with_capacity(model.store.len());
    // Manifest length depends on the offsets it contains; offsets in turn
    // start after the manifest. Fix by computing with placeholder offsets of
    // equal serialized width (u64 max has the longest decimal form only for
    // huge files; instead serialize twice and re-align).
    let mut manifest = Manifest {
        spec: model.spec.clone(),
        spec_hash: model.spec.hash(),
        seed: model.store.meta.seed,
        epoch: model.store.meta.epoch,
        tensors: Vec::new(),
    };
    for p in model.store.iter() {
        entries.push(TensorEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            offset: 0,
            len: p.value.numel() as u64,
            trainable: p.trainable,
        });
    }
    manifest.tensors = entries;

    // Iterate offset assignment until the manifest length stabilizes.
    let mut header_len = 0u64;
    for _ in 0..8 {
        let json = serde_json::to_vec(&manifest).expect("manifest serializes");
        let candidate = align_up(4 + 4 + 4 + json.len() as u64);
        let mut off = candidate;
        for e in manifest.tensors.iter_mut() {
            e.offset = off;
            off = align_up(off + e.len * 4);
        }
        if candidate == header_len {
            break;
        }
        header_len = candidate;
    }

    let json = serde_json::to_vec(&manifest).expect("manifest serializes");
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&MAGIC)?;
    f.write_all(&VERSION.to_le_bytes())?;
    f.write_all(&(json.len() as u32).to_le_bytes())?;
    f.write_all(&json)?;
    let mut pos = 4 + 4 + 4 + json.len() as u64;
    for (p, e) in model.store.iter().zip(&manifest.tensors) {
        while pos < e.offset {
            f.write_all(&[0u8])?;
            pos += 1;
        }
        for v in p.value.data() {
            f.write_all(&v.to_le_bytes())?;
        }
        pos += e.len * 4;
    }
    f.flush()?;
    Ok(())
}

/// Load a checkpoint; validates magic, version, manifest integrity and the
/// embedded spec hash.
pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut head = [0u8; 12];
    f.read_exact(&mut head).map_err(|_| NetError::CorruptManifest("file shorter than header".into()))?;
    if head[0..4] != MAGIC {
        return Err(NetError::CorruptManifest("bad magic".into()));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(NetError::UnknownVersion(version));
    }
    let json_len = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let mut json = vec![0u8; json_len];
    f.read_exact(&mut json).map_err(|_| NetError::CorruptManifest("manifest truncated".into()))?;
    let manifest: Manifest =
        serde_json::from_slice(&json).map_err(|e| NetError::CorruptManifest(e.to_string()))?;
    if manifest.spec_hash != manifest.spec.hash() {
        return Err(NetError::CorruptManifest("spec hash does not match embedded spec".into()));
    }

    let rest = {
        let mut buf = Vec::new();
        f.read_to_end(&mut buf)?;
        buf
    };
    let base = 12 + json_len as u64;

    let mut store = ParameterStore::new(StoreMeta {
        spec_hash: manifest.spec_hash,
        seed: manifest.seed,
        epoch: manifest.epoch,
    });
    for e in &manifest.tensors {
        if e.offset % ALIGN != 0 {
            return Err(NetError::CorruptManifest(format!("tensor {} offset not aligned", e.name)));
        }
        let numel: usize = e.shape.iter().product();
        if numel as u64 != e.len {
            return Err(NetError::CheckpointShapeMismatch(format!(
                "{}: shape {:?} disagrees with len {}",
                e.name, e.shape, e.len
            )));
        }
        let start = (e.offset - base) as usize;
        let end = start + (e.len as usize) * 4;
        if end > rest.len() {
            return Err(NetError::CheckpointShapeMismatch(format!("{}: payload truncated", e.name)));
        }
        let data: Vec<f32> = rest[start..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        store.add(&e.name, tensorcore::Tensor::new(e.shape.clone(), data)?, e.trainable)?;
    }
    Ok(Model { spec: manifest.spec, store })
}

/// Load and require the checkpoint to match an expected spec.
pub fn load_checkpoint_expecting(path: &Path, expected: &NetworkSpec) -> Result<Model> {
    let model = load_checkpoint(path)?;
    if model.spec.hash() != expected.hash() {
        return Err(NetError::SpecMismatch { found: model.spec.hash(), expected: expected.hash() });
    }
    Ok(model)
}

/// Read just the spec hash of a checkpoint (registry bookkeeping).
pub fn peek_spec_hash(path: &Path) -> Result<u64> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut head = [0u8; 12];
    f.read_exact(&mut head).map_err(|_| NetError::CorruptManifest("file shorter than header".into()))?;
    if head[0..4] != MAGIC {
        return Err(NetError::CorruptManifest("bad magic".into()));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(NetError::UnknownVersion(version));
    }
    let json_len = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let mut json = vec![0u8; json_len];
    f.read_exact(&mut json).map_err(|_| NetError::CorruptManifest("manifest truncated".into()))?;
    let manifest: Manifest =
        serde_json::from_slice(&json).map_err(|e| NetError::CorruptManifest(e.to_string()))?;
    Ok(manifest.spec_hash)
}

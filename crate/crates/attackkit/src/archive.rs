//! Adversarial set archives: a manifest JSON plus a raw tensor container,
//! with optional (non-canonical, 8-bit lossy) PNG export.

use crate::config::AttackConfig;
use crate::error::{AttackError, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use tensorcore::Tensor;

const TENSOR_MAGIC: [u8; 4] = *b"LBBT";
const TENSOR_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub source_index: u32,
    pub guide_index: Option<u32>,
    pub final_objective: f32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub version: u32,
    pub config: AttackConfig,
    pub config_hash: u64,
    pub surrogate_hash: u64,
    pub examples: Vec<ExampleRecord>,
}

/// Write a raw f32 tensor: magic, version, shape header, LE payload.
pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&TENSOR_MAGIC)?;
    f.write_all(&TENSOR_VERSION.to_le_bytes())?;
    let shape_json = serde_json::to_vec(t.shape()).expect("shape serializes");
    f.write_all(&(shape_json.len() as u32).to_le_bytes())?;
    f.write_all(&shape_json)?;
    for v in t.data() {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut head = [0u8; 12];
    f.read_exact(&mut head).map_err(|_| AttackError::ArchiveMalformed("short tensor header".into()))?;
    if head[0..4] != TENSOR_MAGIC {
        return Err(AttackError::ArchiveMalformed("bad tensor magic".into()));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != TENSOR_VERSION {
        return Err(AttackError::ArchiveMalformed(format!("tensor container version {version}")));
    }
    let jl = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let mut jbuf = vec![0u8; jl];
    f.read_exact(&mut jbuf).map_err(|_| AttackError::ArchiveMalformed("short shape header".into()))?;
    let shape: Vec<usize> =
        serde_json::from_slice(&jbuf).map_err(|e| AttackError::ArchiveMalformed(e.to_string()))?;
    let numel: usize = shape.iter().product();
    let mut payload = vec![0u8; numel * 4];
    f.read_exact(&mut payload).map_err(|_| AttackError::ArchiveMalformed("payload truncated".into()))?;
    let data: Vec<f32> =
        payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    Ok(Tensor::new(shape, data)?)
}

/// Persist an adversarial set: `manifest.json` + `x_adv.lbbt` in `dir`.
pub fn save_archive(
    dir: &Path,
    cfg: &AttackConfig,
    surrogate_hash: u64,
    x_adv: &Tensor,
    examples: Vec<ExampleRecord>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = ArchiveManifest {
        version: 1,
        config: cfg.clone(),
        config_hash: cfg.hash(),
        surrogate_hash,
        examples,
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    std::fs::write(dir.join("manifest.json"), json)?;
    write_tensor(&dir.join("x_adv.lbbt"), x_adv)?;
    Ok(())
}

pub fn load_archive(dir: &Path) -> Result<(ArchiveManifest, Tensor)> {
    let bytes = std::fs::read(dir.join("manifest.json"))
        .map_err(|_| AttackError::ArchiveMalformed(format!("missing manifest in {}", dir.display())))?;
    let manifest: ArchiveManifest =
        serde_json::from_slice(&bytes).map_err(|e| AttackError::ArchiveMalformed(e.to_string()))?;
    let x_adv = read_tensor(&dir.join("x_adv.lbbt"))?;
    if manifest.examples.len() != x_adv.shape()[0] {
        return Err(AttackError::ArchiveMalformed(format!(
            "{} example records for {} tensors",
            manifest.examples.len(),
            x_adv.shape()[0]
        )));
    }
    Ok((manifest, x_adv))
}

/// Lossy 8-bit PNG export of archive images (not the canonical payload).
pub fn export_pngs(dir: &Path, x_adv: &Tensor) -> Result<()> {
    let out = dir.join("png");
    std::fs::create_dir_all(&out)?;
    let (n, c, h, w) = x_adv.dims4()?;
    if c != 3 {
        return Err(AttackError::InvalidConfig(format!("png export expects 3 channels, got {c}")));
    }
    for i in 0..n {
        let img = &x_adv.data()[i * c * h * w..(i + 1) * c * h * w];
        let mut rgb = vec![0u8; h * w * 3];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..3 {
                    rgb[(y * w + x) * 3 + ch] =
                        (img[ch * h * w + y * w + x].clamp(0.0, 1.0) * 255.0).round() as u8;
                }
            }
        }
        let file = std::fs::File::create(out.join(format!("{i:05}.png")))?;
        let mut enc = png::Encoder::new(std::io::BufWriter::new(file), w as u32, h as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| AttackError::ArchiveMalformed(e.to_string()))?;
        writer.write_image_data(&rgb).map_err(|e| AttackError::ArchiveMalformed(e.to_string()))?;
    }
    Ok(())
}

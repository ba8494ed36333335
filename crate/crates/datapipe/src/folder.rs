//! Folder-of-PNGs ingestion: one subdirectory per class, deterministic
//! alphabetical class indexing, center-crop then bilinear resize.

use crate::error::{DataError, Result};
use crate::sampleset::{IndexSelection, Provenance, SampleSet};
use std::path::Path;
use tensorcore::Tensor;

/// Decode a PNG into (3,h,w) floats in [0,1]. Grayscale expands to three
/// channels; alpha is dropped.
fn decode_png(path: &Path) -> Result<(Vec<f32>, usize, usize)> {
    let file = std::fs::File::open(path).map_err(|_| DataError::MissingFile { path: path.to_path_buf() })?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| DataError::Malformed { path: path.to_path_buf(), reason: e.to_string() })?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| DataError::Malformed { path: path.to_path_buf(), reason: e.to_string() })?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = info.color_type.samples();
    if info.bit_depth != png::BitDepth::Eight {
        return Err(DataError::Malformed { path: path.to_path_buf(), reason: "only 8-bit PNGs supported".into() });
    }
    let mut out = vec![0f32; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            let base = (y * w + x) * channels;
            for c in 0..3 {
                let v = match channels {
                    1 | 2 => buf[base],
                    _ => buf[base + c],
                };
                out[c * h * w + y * w + x] = v as f32 / 255.0;
            }
        }
    }
    Ok((out, h, w))
}

/// Center-crop to square then bilinear-resize to (th, tw).
fn center_crop_resize(img: &[f32], h: usize, w: usize, th: usize, tw: usize) -> Vec<f32> {
    let side = h.min(w);
    let oy = (h - side) / 2;
    let ox = (w - side) / 2;
    let mut out = vec![0f32; 3 * th * tw];
    for c in 0..3 {
        for y in 0..th {
            // map output pixel center into crop coordinates
            let fy = (y as f32 + 0.5) * side as f32 / th as f32 - 0.5;
            let y0 = fy.floor().max(0.0) as usize;
            let y1 = (y0 + 1).min(side - 1);
            let wy = (fy - y0 as f32).clamp(0.0, 1.0);
            for x in 0..tw {
                let fx = (x as f32 + 0.5) * side as f32 / tw as f32 - 0.5;
                let x0 = fx.floor().max(0.0) as usize;
                let x1 = (x0 + 1).min(side - 1);
                let wx = (fx - x0 as f32).clamp(0.0, 1.0);
                let px = |yy: usize, xx: usize| img[c * h * w + (oy + yy) * w + ox + xx];
                let top = px(y0, x0) * (1.0 - wx) + px(y0, x1) * wx;
                let bot = px(y1, x0) * (1.0 - wx) + px(y1, x1) * wx;
                out[c * th * tw + y * tw + x] = (top * (1.0 - wy) + bot * wy).clamp(0.0, 1.0);
            }
        }
    }
    out
}

/// Load `dir` as a labeled dataset: every subdirectory is a class (sorted
/// alphabetically), every `*.png` inside is a sample resized to (h, w).
pub fn load_folder_dataset(dir: &Path, h: usize, w: usize) -> Result<SampleSet> {
    let mut classes: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|_| DataError::MissingFile { path: dir.to_path_buf() })? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            classes.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    classes.sort();
    if classes.is_empty() {
        return Err(DataError::Malformed { path: dir.to_path_buf(), reason: "no class subdirectories".into() });
    }
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (ci, class) in classes.iter().enumerate() {
        let cdir = dir.join(class);
        let mut files: Vec<_> = std::fs::read_dir(&cdir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().map(|e| e.eq_ignore_ascii_case("png")).unwrap_or(false))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(DataError::EmptyClass(class.clone()));
        }
        for f in files {
            let (img, ih, iw) = decode_png(&f)?;
            images.extend(center_crop_resize(&img, ih, iw, h, w));
            labels.push(ci as u32);
        }
    }
    let n = labels.len();
    SampleSet::new(
        Tensor::new(vec![n, 3, h, w], images)?,
        Some(labels),
        classes.len(),
        Provenance {
            dataset: format!("folder:{}", dir.display()),
            split: "all".into(),
            selection_seed: None,
            indices: IndexSelection::All(n),
        },
    )
}

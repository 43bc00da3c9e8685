//! IDX (MNIST-style) image and label files.

use std::path::Path;

use super::{feature_stats, DatasetMeta, LabeledDataset};
use crate::tensor::Tensor;
use crate::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Optional preprocessing for [`load_idx_with`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdxOptions {
    /// Average-pool images down to `side × side`. The image is first
    /// center-cropped to the largest multiple of `side`.
    pub downsample: Option<usize>,
    /// Keep only the first `limit` samples.
    pub limit: Option<usize>,
    /// Normalize with these `(mean, std)` instead of the file's own statistics,
    /// e.g. training-set statistics for a test split.
    pub stats: Option<(Vec<f32>, Vec<f32>)>,
}

fn be_u32(bytes: &[u8], at: usize, path: &Path, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(path, format!("truncated IDX file while reading {what}")))
}

fn check_payload(bytes: &[u8], header: usize, expected: usize, path: &Path) -> Result<()> {
    let found = bytes.len() - header;
    if found < expected {
        return Err(Error::format(
            path,
            format!("truncated IDX file: expected {expected} payload bytes, found {found}"),
        ));
    }
    if found > expected {
        return Err(Error::format(path, format!("{} trailing bytes after IDX payload", found - expected)));
    }
    Ok(())
}

/// Returns `(count, rows, cols, pixels)` with raw `u8` pixels.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = be_u32(bytes, 0, path, "magic")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(path, format!("bad image magic {magic:#010x}, expected 0x00000803")));
    }
    let count = be_u32(bytes, 4, path, "image count")? as usize;
    let rows = be_u32(bytes, 8, path, "row count")? as usize;
    let cols = be_u32(bytes, 12, path, "column count")? as usize;
    let expected = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::format(path, "IDX dimensions overflow"))?;
    check_payload(bytes, 16, expected, path)?;
    Ok((count, rows, cols, bytes[16..].to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, path, "magic")?;
    if magic != LABEL_MAGIC {
        return Err(Error::format(path, format!("bad label magic {magic:#010x}, expected 0x00000801")));
    }
    let count = be_u32(bytes, 4, path, "label count")? as usize;
    check_payload(bytes, 8, count, path)?;
    Ok(bytes[8..].to_vec())
}

fn pool(pixels: &[f32], rows: usize, cols: usize, side: usize) -> Result<Vec<f32>> {
    if side == 0 || side > rows || side > cols {
        return Err(Error::Config(format!(
            "cannot downsample {rows}×{cols} images to {side}×{side}"
        )));
    }
    let (fr, fc) = (rows / side, cols / side);
    let (r0, c0) = ((rows - fr * side) / 2, (cols - fc * side) / 2);
    let area = (fr * fc) as f32;
    let mut out = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            let mut acc = 0.0;
            for r in r0 + i * fr..r0 + (i + 1) * fr {
                acc += pixels[r * cols + c0 + j * fc..r * cols + c0 + (j + 1) * fc].iter().sum::<f32>();
            }
            out.push(acc / area);
        }
    }
    Ok(out)
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    load_idx_with(images_path, labels_path, &IdxOptions::default())
}

/// Loads an IDX pair, scales pixels to `[0, 1]`, optionally downsamples, and
/// normalizes each feature.
pub fn load_idx_with(images_path: &Path, labels_path: &Path, options: &IdxOptions) -> Result<LabeledDataset> {
    let image_bytes = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let label_bytes = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let (count, rows, cols, pixels) = parse_idx_images(&image_bytes, images_path)?;
    let labels = parse_idx_labels(&label_bytes, labels_path)?;
    if labels.len() != count {
        return Err(Error::format(
            labels_path,
            format!("label count {} does not match image count {count}", labels.len()),
        ));
    }
    let n = options.limit.map_or(count, |l| l.min(count));
    let image_len = rows * cols;
    let mut features = Vec::new();
    let mut dim = image_len;
    for img in pixels.chunks_exact(image_len.max(1)).take(n) {
        let scaled: Vec<f32> = img.iter().map(|&p| p as f32 / 255.0).collect();
        match options.downsample {
            Some(side) => {
                features.extend(pool(&scaled, rows, cols, side)?);
                dim = side * side;
            }
            None => features.extend(scaled),
        }
    }
    let labels: Vec<usize> = labels[..n].iter().map(|&l| l as usize).collect();
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let (mean, std) = match &options.stats {
        Some((mean, std)) => {
            if mean.len() != dim || std.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: mean.len(),
                });
            }
            (mean.clone(), std.clone())
        }
        None => feature_stats(&features, dim),
    };
    let name = images_path
        .file_name()
        .map_or_else(|| "idx".to_string(), |s| s.to_string_lossy().into_owned());
    let meta = DatasetMeta {
        num_classes,
        len: n,
        dim,
        name,
        mean,
        std,
        class_names: (0..num_classes).map(|c| c.to_string()).collect(),
    };
    let normalized = meta.normalize(&features);
    let samples = Tensor::new(vec![n, dim], normalized)?;
    LabeledDataset::new(samples, labels, meta)
}

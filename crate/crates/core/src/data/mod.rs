//! Labeled datasets, the learnable synthetic set, batching and persistence.

mod batch;
mod csv_io;
mod idx;
mod midd;
mod mixture;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;
use crate::{Error, Result};

pub use batch::class_balanced_batch;
pub use csv_io::{load_csv, save_csv};
pub use idx::{load_idx, load_idx_with, parse_idx_images, parse_idx_labels, IdxOptions};
pub use midd::{
    load_synthetic, read_synthetic, save_synthetic, sidecar_path, write_synthetic, LoadedSynthetic, SyntheticMeta,
};
pub use mixture::gen_gaussian_mixture;
pub use synthetic::{init_synthetic, InitMode, SyntheticSet};

/// Bookkeeping for a dataset, including the per-feature affine normalization
/// that was applied to its samples (`x_stored = (x_raw − mean) / std`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub num_classes: usize,
    pub len: usize,
    pub dim: usize,
    pub name: String,
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
    /// Original label values in dense-index order.
    #[serde(default)]
    pub class_names: Vec<String>,
}

impl DatasetMeta {
    pub fn normalize(&self, raw: &[f32]) -> Vec<f32> {
        raw.iter()
            .enumerate()
            .map(|(i, &v)| (v - self.mean[i % self.dim]) / self.std[i % self.dim])
            .collect()
    }

    pub fn denormalize(&self, stored: &[f32]) -> Vec<f32> {
        stored
            .iter()
            .enumerate()
            .map(|(i, &v)| v * self.std[i % self.dim] + self.mean[i % self.dim])
            .collect()
    }
}

/// Smallest per-feature scale used for normalization; near-constant features
/// (e.g. image borders) would otherwise blow up.
pub const STD_FLOOR: f32 = 0.1;

/// Per-feature mean and floored standard deviation of an `n×d` row-major block.
pub fn feature_stats(data: &[f32], dim: usize) -> (Vec<f32>, Vec<f32>) {
    let n = if dim == 0 { 0 } else { data.len() / dim };
    let mut mean = vec![0f64; dim];
    let mut var = vec![0f64; dim];
    if n == 0 {
        return (vec![0.0; dim], vec![1.0; dim]);
    }
    for row in data.chunks_exact(dim) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    for row in data.chunks_exact(dim) {
        for ((s, &v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v as f64 - m).powi(2);
        }
    }
    let std = var
        .iter()
        .map(|s| ((s / n as f64).sqrt() as f32).max(STD_FLOOR))
        .collect();
    (mean.into_iter().map(|m| m as f32).collect(), std)
}

/// `N×d` samples with dense labels in `[0, C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    samples: Tensor<f32>,
    labels: Vec<usize>,
    meta: DatasetMeta,
    by_class: Vec<Vec<usize>>,
}

impl LabeledDataset {
    /// Wraps already-normalized samples. `meta.len`/`meta.dim`/`meta.num_classes`
    /// are checked against the data.
    pub fn new(samples: Tensor<f32>, labels: Vec<usize>, meta: DatasetMeta) -> Result<Self> {
        let (rows, cols) = samples.dims2()?;
        if rows == 0 {
            return Err(Error::EmptyDataset);
        }
        if rows != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows,
                found: labels.len(),
            });
        }
        if meta.num_classes < 2 {
            return Err(Error::Data(format!(
                "a labeled dataset needs at least 2 classes, got {}",
                meta.num_classes
            )));
        }
        if rows < meta.num_classes {
            return Err(Error::Data(format!(
                "{rows} samples cannot cover {} classes",
                meta.num_classes
            )));
        }
        if meta.len != rows || meta.dim != cols || meta.mean.len() != cols || meta.std.len() != cols {
            return Err(Error::Data(format!(
                "metadata ({} × {}) does not describe a {rows} × {cols} sample matrix",
                meta.len, meta.dim
            )));
        }
        let mut by_class = vec![Vec::new(); meta.num_classes];
        for (i, &label) in labels.iter().enumerate() {
            if label >= meta.num_classes {
                return Err(Error::LabelOutOfRange {
                    label,
                    classes: meta.num_classes,
                });
            }
            by_class[label].push(i);
        }
        Ok(Self {
            samples,
            labels,
            meta,
            by_class,
        })
    }

    /// Convenience constructor with identity normalization.
    pub fn from_raw(samples: Tensor<f32>, labels: Vec<usize>, num_classes: usize, name: &str) -> Result<Self> {
        let (rows, cols) = samples.dims2()?;
        let meta = DatasetMeta {
            num_classes,
            len: rows,
            dim: cols,
            name: name.to_string(),
            mean: vec![0.0; cols],
            std: vec![1.0; cols],
            class_names: (0..num_classes).map(|c| c.to_string()).collect(),
        };
        Self::new(samples, labels, meta)
    }

    pub fn samples(&self) -> &Tensor<f32> {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.meta.dim
    }

    pub fn num_classes(&self) -> usize {
        self.meta.num_classes
    }

    /// Row indices of every class, in dataset order.
    pub fn class_indices(&self) -> &[Vec<usize>] {
        &self.by_class
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.by_class.iter().map(Vec::len).collect()
    }

    /// Rows and labels at `indices`.
    pub fn gather(&self, indices: &[usize]) -> Result<(Tensor<f32>, Vec<usize>)> {
        let x = self.samples.select_rows(indices)?;
        Ok((x, indices.iter().map(|&i| self.labels[i]).collect()))
    }

    /// The first `n` samples as a new dataset.
    pub fn take(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        let indices: Vec<usize> = (0..n).collect();
        let (x, y) = self.gather(&indices)?;
        let meta = DatasetMeta {
            len: n,
            ..self.meta.clone()
        };
        Self::new(x, y, meta)
    }
}

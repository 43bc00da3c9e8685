use rand::seq::index;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{LabeledDataset, STD_FLOOR};
use crate::seed;
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Copy randomly chosen real samples of each class.
    #[default]
    RealSample,
    /// Standard normal noise scaled by the per-feature std of the real data.
    Noise,
}

/// The learnable synthetic dataset: `M = C·IPC` rows in class-major order.
///
/// Labels are fixed at construction and never exposed mutably.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    samples: Tensor<f32>,
    labels: Vec<usize>,
    ipc: usize,
    num_classes: usize,
}

impl SyntheticSet {
    pub fn new(samples: Tensor<f32>, ipc: usize, num_classes: usize) -> Result<Self> {
        let (rows, _) = samples.dims2()?;
        if ipc == 0 || num_classes == 0 {
            return Err(Error::Config("a synthetic set needs IPC ≥ 1 and C ≥ 1".into()));
        }
        if rows != ipc * num_classes {
            return Err(Error::DimensionMismatch {
                expected: ipc * num_classes,
                found: rows,
            });
        }
        let labels = (0..num_classes).flat_map(|c| std::iter::repeat_n(c, ipc)).collect();
        Ok(Self {
            samples: samples.with_requires_grad(true),
            labels,
            ipc,
            num_classes,
        })
    }

    pub fn samples(&self) -> &Tensor<f32> {
        &self.samples
    }

    pub(crate) fn samples_mut(&mut self) -> &mut Tensor<f32> {
        &mut self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn ipc(&self) -> usize {
        self.ipc
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }
}

pub fn init_synthetic(real: &LabeledDataset, ipc: usize, mode: InitMode, seed: u64) -> Result<SyntheticSet> {
    if ipc == 0 {
        return Err(Error::Config("IPC must be at least 1".into()));
    }
    let classes = real.num_classes();
    let dim = real.dim();
    for (class, members) in real.class_indices().iter().enumerate() {
        if members.len() < ipc {
            return Err(Error::Data(format!(
                "class {class} has {} samples, fewer than IPC = {ipc}",
                members.len()
            )));
        }
    }
    let data = match mode {
        InitMode::RealSample => {
            let mut rows = Vec::with_capacity(classes * ipc);
            for (class, members) in real.class_indices().iter().enumerate() {
                let mut rng = seed::derived_rng(seed, "init-real", class as u64);
                rows.extend(index::sample(&mut rng, members.len(), ipc).into_iter().map(|i| members[i]));
            }
            real.samples().select_rows(&rows)?.into_data()
        }
        InitMode::Noise => {
            let x = real.samples().data();
            let n = real.len() as f64;
            let std: Vec<f64> = (0..dim)
                .map(|j| {
                    let mean = x.iter().skip(j).step_by(dim).map(|&v| v as f64).sum::<f64>() / n;
                    let var = x.iter().skip(j).step_by(dim).map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
                    var.sqrt().max(STD_FLOOR as f64)
                })
                .collect();
            let mut rng = seed::derived_rng(seed, "init-noise", 0);
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            (0..classes * ipc * dim)
                .map(|i| (normal.sample(&mut rng) * std[i % dim]) as f32)
                .collect()
        }
    };
    SyntheticSet::new(Tensor::new(vec![classes * ipc, dim], data)?, ipc, classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_gaussian_mixture;

    #[test]
    fn one_per_class() {
        let real = gen_gaussian_mixture(10, 5, 3, 0.2, 1).unwrap();
        let syn = init_synthetic(&real, 1, InitMode::RealSample, 3).unwrap();
        assert_eq!(syn.len(), 10);
        assert_eq!(syn.labels(), (0..10).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn real_sample_rows_come_from_their_class() {
        let real = gen_gaussian_mixture(4, 20, 3, 0.5, 1).unwrap();
        let syn = init_synthetic(&real, 5, InitMode::RealSample, 3).unwrap();
        for (j, &label) in syn.labels().iter().enumerate() {
            let row = syn.samples().row(j);
            assert!(real.class_indices()[label].iter().any(|&i| real.samples().row(i) == row));
        }
    }

    #[test]
    fn noise_is_reproducible() {
        let real = gen_gaussian_mixture(4, 20, 3, 0.5, 1).unwrap();
        let a = init_synthetic(&real, 2, InitMode::Noise, 3).unwrap();
        let b = init_synthetic(&real, 2, InitMode::Noise, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.samples().requires_grad());
    }

    #[test]
    fn too_few_samples_per_class() {
        let real = gen_gaussian_mixture(4, 3, 3, 0.5, 1).unwrap();
        assert!(init_synthetic(&real, 4, InitMode::RealSample, 0).is_err());
    }
}

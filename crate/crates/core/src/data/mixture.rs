use std::f64::consts::TAU;

use rand_distr::{Distribution, Normal};

use super::LabeledDataset;
use crate::seed;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Class centers on the unit circle in the first two coordinates; for `d = 1`
/// the centers sit at `0, 1, …, C−1` on the line.
fn center(class: usize, classes: usize, dim: usize) -> Vec<f64> {
    let mut c = vec![0.0; dim];
    if dim == 1 {
        c[0] = class as f64;
    } else {
        let angle = TAU * class as f64 / classes as f64;
        c[0] = angle.cos();
        c[1] = angle.sin();
    }
    c
}

/// Isotropic Gaussian blobs with standard deviation `spread`, class-major order.
pub fn gen_gaussian_mixture(
    classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if classes < 2 {
        return Err(Error::Config(format!("a mixture needs at least 2 classes, got {classes}")));
    }
    if per_class == 0 || dim == 0 {
        return Err(Error::Config("per_class and dim must be positive".into()));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::Config(format!("spread must be finite and ≥ 0, got {spread}")));
    }
    let mut rng = seed::derived_rng(seed, "mixture", 0);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut data = Vec::with_capacity(classes * per_class * dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    for class in 0..classes {
        let mu = center(class, classes, dim);
        for _ in 0..per_class {
            data.extend(mu.iter().map(|m| m + spread * noise.sample(&mut rng)));
            labels.push(class);
        }
    }
    let samples = Tensor::from_f64(vec![classes * per_class, dim], &data)?;
    LabeledDataset::from_raw(samples, labels, classes, "gaussian-mixture")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_balance() {
        let ds = gen_gaussian_mixture(4, 200, 2, 0.25, 1).unwrap();
        assert_eq!(ds.len(), 800);
        assert_eq!(ds.class_counts(), vec![200; 4]);
    }

    #[test]
    fn zero_spread_collapses_classes() {
        let ds = gen_gaussian_mixture(3, 5, 3, 0.0, 1).unwrap();
        for idx in ds.class_indices() {
            let first = ds.samples().row(idx[0]);
            assert!(idx.iter().all(|&i| ds.samples().row(i) == first));
        }
    }

    #[test]
    fn seeded() {
        let a = gen_gaussian_mixture(4, 10, 2, 0.3, 7).unwrap();
        let b = gen_gaussian_mixture(4, 10, 2, 0.3, 7).unwrap();
        let c = gen_gaussian_mixture(4, 10, 2, 0.3, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.samples(), c.samples());
        assert!(gen_gaussian_mixture(1, 10, 2, 0.3, 7).is_err());
        assert!(gen_gaussian_mixture(2, 0, 2, 0.3, 7).is_err());
    }
}

use crate::tensor::{Element, Tensor};
use crate::{Error, Result};

/// The full `m × n` cross product of synthetic and real samples, split into
/// positive pairs (same class) and negative pairs (different class).
///
/// Pairs are never materialized; membership is decided from the labels, so
/// counts stay cheap for large batches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairBatch {
    syn_labels: Vec<usize>,
    real_labels: Vec<usize>,
    num_classes: usize,
    syn_counts: Vec<usize>,
    real_counts: Vec<usize>,
}

fn counts(labels: &[usize], classes: usize, side: &str) -> Result<Vec<usize>> {
    let mut counts = vec![0; classes];
    for &label in labels {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        counts[label] += 1;
    }
    if labels.is_empty() {
        return Err(Error::Data(format!("cannot build pairs from an empty {side} batch")));
    }
    Ok(counts)
}

pub fn build_pairs(syn_labels: &[usize], real_labels: &[usize], num_classes: usize) -> Result<PairBatch> {
    let syn_counts = counts(syn_labels, num_classes, "synthetic")?;
    let real_counts = counts(real_labels, num_classes, "real")?;
    Ok(PairBatch {
        syn_labels: syn_labels.to_vec(),
        real_labels: real_labels.to_vec(),
        num_classes,
        syn_counts,
        real_counts,
    })
}

impl PairBatch {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn syn_len(&self) -> usize {
        self.syn_labels.len()
    }

    pub fn real_len(&self) -> usize {
        self.real_labels.len()
    }

    pub fn syn_labels(&self) -> &[usize] {
        &self.syn_labels
    }

    pub fn real_labels(&self) -> &[usize] {
        &self.real_labels
    }

    pub fn total(&self) -> u64 {
        self.syn_len() as u64 * self.real_len() as u64
    }

    pub fn positives(&self) -> u64 {
        self.syn_counts
            .iter()
            .zip(&self.real_counts)
            .map(|(&s, &r)| s as u64 * r as u64)
            .sum()
    }

    pub fn negatives(&self) -> u64 {
        self.total() - self.positives()
    }

    /// The indicator `D` for pair `(i, j)`.
    pub fn is_positive(&self, i: usize, j: usize) -> bool {
        self.syn_labels[i] == self.real_labels[j]
    }

    fn pairs(&self, positive: bool) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.syn_len())
            .flat_map(move |i| (0..self.real_len()).map(move |j| (i, j)))
            .filter(move |&(i, j)| self.is_positive(i, j) == positive)
    }

    pub fn positive_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs(true)
    }

    pub fn negative_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs(false)
    }

    /// `m × n` indicator matrices of the positive and negative pairs.
    pub fn masks<F: Element>(&self) -> (Tensor<F>, Tensor<F>) {
        let (m, n) = (self.syn_len(), self.real_len());
        let mut pos = Vec::with_capacity(m * n);
        for &s in &self.syn_labels {
            pos.extend(self.real_labels.iter().map(|&r| if s == r { F::one() } else { F::zero() }));
        }
        let neg = pos.iter().map(|&p| F::one() - p).collect();
        (
            Tensor::new(vec![m, n], pos).expect("finite indicators"),
            Tensor::new(vec![m, n], neg).expect("finite indicators"),
        )
    }
}

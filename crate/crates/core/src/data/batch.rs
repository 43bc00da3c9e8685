use rand::seq::index;

use super::LabeledDataset;
use crate::seed;
use crate::{Error, Result};

/// Draws `per_class` distinct indices from every class, in class-major order.
///
/// The draw depends only on `(seed, step)`.
pub fn class_balanced_batch(dataset: &LabeledDataset, per_class: usize, seed: u64, step: u64) -> Result<Vec<usize>> {
    let mut rng = seed::derived_rng(seed, "balanced-batch", step);
    let mut batch = Vec::with_capacity(per_class * dataset.num_classes());
    for (class, members) in dataset.class_indices().iter().enumerate() {
        if members.len() < per_class {
            return Err(Error::Data(format!(
                "class {class} has {} samples, cannot draw {per_class}",
                members.len()
            )));
        }
        batch.extend(index::sample(&mut rng, members.len(), per_class).into_iter().map(|i| members[i]));
    }
    Ok(batch)
}

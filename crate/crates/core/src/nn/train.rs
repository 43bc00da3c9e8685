use rand::seq::SliceRandom;

use super::{MlpNetwork, SgdState};
use crate::seed;
use crate::tensor::{Element, Tape, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    /// Shuffling is reseeded per epoch from this seed.
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 256,
            seed: 0,
        }
    }
}

fn check_labeled<F: Element>(net: &MlpNetwork<F>, samples: &Tensor<F>, labels: &[usize]) -> Result<()> {
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
    if cols != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            found: cols,
        });
    }
    let classes = net.num_classes();
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// Mini-batch softmax cross-entropy training on a private copy of `net`.
///
/// Returns the trained network and the mean training loss of every epoch.
/// The SGD iteration counter advances once per mini-batch.
pub fn train_classifier<F: Element>(
    net: &MlpNetwork<F>,
    samples: &Tensor<F>,
    labels: &[usize],
    options: &TrainOptions,
    mut sgd: SgdState<F>,
) -> Result<(MlpNetwork<F>, Vec<f64>)> {
    check_labeled(net, samples, labels)?;
    if options.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut trained = net.clone();
    let mut trace = Vec::with_capacity(options.epochs);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    let mut step = 0;
    for epoch in 0..options.epochs {
        let mut rng = seed::derived_rng(options.seed, "shuffle", epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(options.batch_size) {
            let x = samples.select_rows(chunk)?;
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let mut tape = Tape::new();
            let input = tape.constant(x);
            let weights = trained.weight_vars(&mut tape, true);
            let layers = trained.forward_tape(&mut tape, input, &weights)?;
            let loss = tape.softmax_cross_entropy(*layers.last().expect("depth >= 2"), &y)?;
            epoch_loss += tape.scalar(loss)?.as_f64();
            batches += 1;
            let grads = tape.backward(loss)?;
            for (slot, (w, var)) in trained.weights_mut().iter_mut().zip(&weights).enumerate() {
                let g = grads.get(*var).expect("weights are parameters");
                sgd.update(slot, step, w, g)?;
            }
            step += 1;
        }
        trace.push(epoch_loss / batches as f64);
    }
    Ok((trained, trace))
}

/// Fraction of samples whose arg-max logit equals the label.
pub fn evaluate_accuracy<F: Element>(net: &MlpNetwork<F>, samples: &Tensor<F>, labels: &[usize]) -> Result<f64> {
    check_labeled(net, samples, labels).or_else(|e| match e {
        // a label the net cannot emit simply counts as a miss
        Error::LabelOutOfRange { .. } => Ok(()),
        other => Err(other),
    })?;
    let predicted = net.predict(samples)?;
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(per_class: usize, seed: u64) -> (Tensor<f32>, Vec<usize>) {
        let mut rng = seed::rng(seed);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2 {
            let center = if c == 0 { -2.0 } else { 2.0 };
            for _ in 0..per_class {
                data.push(center + noise.sample(&mut rng));
                data.push(noise.sample(&mut rng));
                labels.push(c);
            }
        }
        (Tensor::from_f64(vec![2 * per_class, 2], &data).unwrap(), labels)
    }

    fn sgd() -> SgdState<f32> {
        SgdState::new(0.01, 0.9, vec![]).unwrap()
    }

    #[test]
    fn separable_blobs_are_fit() {
        let (x, y) = blobs(100, 3);
        let net = MlpNetwork::init(&[2, 16, 2], 5).unwrap();
        let opts = TrainOptions {
            epochs: 50,
            batch_size: 32,
            seed: 9,
        };
        let (trained, trace) = train_classifier(&net, &x, &y, &opts, sgd()).unwrap();
        assert_eq!(trace.len(), 50);
        assert!(trace[49] < trace[0]);
        assert!(evaluate_accuracy(&trained, &x, &y).unwrap() >= 0.99);
    }

    #[test]
    fn zero_epochs_leaves_net_unchanged() {
        let (x, y) = blobs(10, 1);
        let net = MlpNetwork::init(&[2, 4, 2], 5).unwrap();
        let opts = TrainOptions {
            epochs: 0,
            ..TrainOptions::default()
        };
        let (trained, trace) = train_classifier(&net, &x, &y, &opts, sgd()).unwrap();
        assert_eq!(trained, net);
        assert!(trace.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = blobs(30, 2);
        let net = MlpNetwork::init(&[2, 8, 2], 5).unwrap();
        let opts = TrainOptions {
            epochs: 5,
            batch_size: 7,
            seed: 4,
        };
        let a = train_classifier(&net, &x, &y, &opts, sgd()).unwrap();
        let b = train_classifier(&net, &x, &y, &opts, sgd()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let net = MlpNetwork::<f32>::init(&[2, 4, 2], 5).unwrap();
        let empty = Tensor::zeros(vec![0, 2]);
        assert!(matches!(
            train_classifier(&net, &empty, &[], &TrainOptions::default(), sgd()),
            Err(Error::EmptyDataset)
        ));
        let x = Tensor::zeros(vec![2, 2]);
        assert!(matches!(
            train_classifier(&net, &x, &[0, 2], &TrainOptions::default(), sgd()),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
        assert!(evaluate_accuracy(&net, &Tensor::zeros(vec![2, 3]), &[0, 1]).is_err());
    }

    #[test]
    fn constant_predictor_on_balanced_set() {
        // zero first layer: every logit is 0, so class 0 always wins
        let w1 = Tensor::<f64>::zeros(vec![3, 2]);
        let w2 = Tensor::zeros(vec![4, 3]);
        let net = MlpNetwork::from_weights(vec![w1, w2]).unwrap();
        let x = Tensor::from_rows(&vec![vec![1.0, 1.0]; 8]).unwrap();
        let y = vec![0, 1, 2, 3, 0, 1, 2, 3];
        assert_eq!(evaluate_accuracy(&net, &x, &y).unwrap(), 0.25);
    }

    #[test]
    fn hand_built_two_point_set() {
        // logits = [x0, x1] through an identity-like net; point A → class 0 (correct),
        // point B = [2, 1] → class 0 but labeled 1.
        let w1 = Tensor::<f64>::identity(2);
        let w2 = Tensor::identity(2);
        let net = MlpNetwork::from_weights(vec![w1, w2]).unwrap();
        let x = Tensor::from_rows(&[vec![3.0, 1.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(evaluate_accuracy(&net, &x, &[0, 1]).unwrap(), 0.5);
    }
}

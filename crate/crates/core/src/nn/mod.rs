//! Bias-free ReLU MLPs and the SGD machinery used to train them.
//!
//! A network with `K` weight matrices maps `d_0 → d_1 → … → d_K`. Layer `k`
//! produces `A^k = relu(A^{k-1} W^kᵀ)` for `k < K`, and the last layer emits
//! raw logits `A^K = A^{K-1} W^Kᵀ`.

mod checkpoint;
mod sgd;
mod train;

use rand_distr::{Distribution, Normal};

use crate::seed;
use crate::tensor::{Element, Tape, Tensor, TensorResult, Var};
use crate::{Error, Result};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use sgd::SgdState;
pub use train::{evaluate_accuracy, train_classifier, TrainOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork<F = f32> {
    /// `W^k` has shape `d_k × d_{k-1}`.
    weights: Vec<Tensor<F>>,
}

/// Per-layer features of one batch, `A^1 … A^K`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivations<F = f32> {
    pub layers: Vec<Tensor<F>>,
}

impl<F: Element> LayerActivations<F> {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn batch(&self) -> usize {
        self.layers.first().map_or(0, Tensor::rows)
    }

    pub fn logits(&self) -> Option<&Tensor<F>> {
        self.layers.last()
    }
}

impl<F: Element> MlpNetwork<F> {
    /// Fan-in scaled Gaussian init (`std = sqrt(2 / d_{k-1})`), reproducible from `seed`.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        validate_dims(dims)?;
        let mut rng = seed::rng(seed);
        let weights = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                let data: Vec<f64> = (0..fan_in * fan_out).map(|_| normal.sample(&mut rng)).collect();
                Tensor::from_f64(vec![fan_out, fan_in], &data)
            })
            .collect::<TensorResult<Vec<_>>>()?;
        Ok(Self { weights })
    }

    pub fn from_weights(weights: Vec<Tensor<F>>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::Config(format!(
                "an MLP needs at least 2 layers, got {}",
                weights.len()
            )));
        }
        let mut prev: Option<usize> = None;
        for w in &weights {
            let (rows, cols) = w.dims2()?;
            if let Some(p) = prev {
                if cols != p {
                    return Err(Error::DimensionMismatch {
                        expected: p,
                        found: cols,
                    });
                }
            }
            prev = Some(rows);
        }
        Ok(Self {
            weights: weights.into_iter().map(|w| w.with_requires_grad(false)).collect(),
        })
    }

    /// `[d_0, d_1, …, d_K]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.weights[0].cols()];
        dims.extend(self.weights.iter().map(Tensor::rows));
        dims
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].cols()
    }

    pub fn num_classes(&self) -> usize {
        self.weights[self.weights.len() - 1].rows()
    }

    pub fn weights(&self) -> &[Tensor<F>] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [Tensor<F>] {
        &mut self.weights
    }

    pub fn forward_features(&self, batch: &Tensor<F>) -> Result<LayerActivations<F>> {
        let (_, cols) = batch.dims2()?;
        if cols != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: cols,
            });
        }
        let last = self.weights.len() - 1;
        let mut layers: Vec<Tensor<F>> = Vec::with_capacity(self.weights.len());
        for (k, w) in self.weights.iter().enumerate() {
            let input = layers.last().unwrap_or(batch);
            let z = input.matmul_t(w)?;
            layers.push(if k == last { z } else { z.relu() });
        }
        Ok(LayerActivations { layers })
    }

    pub fn logits(&self, batch: &Tensor<F>) -> Result<Tensor<F>> {
        let mut acts = self.forward_features(batch)?;
        Ok(acts.layers.pop().expect("depth >= 2"))
    }

    pub fn predict(&self, batch: &Tensor<F>) -> Result<Vec<usize>> {
        let logits = self.logits(batch)?;
        Ok((0..logits.rows())
            .map(|r| {
                let row = logits.row(r);
                // first maximum wins on ties
                let mut best = 0;
                for (c, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }

    /// Puts the weights on `tape`, as parameters when `trainable`.
    pub fn weight_vars(&self, tape: &mut Tape<F>, trainable: bool) -> Vec<Var> {
        self.weights
            .iter()
            .map(|w| {
                if trainable {
                    tape.param(w.clone())
                } else {
                    tape.constant(w.clone())
                }
            })
            .collect()
    }

    /// Records the forward pass of `input` on `tape` and returns `A^1 … A^K`.
    pub fn forward_tape(&self, tape: &mut Tape<F>, input: Var, weights: &[Var]) -> Result<Vec<Var>> {
        if weights.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                found: weights.len(),
            });
        }
        let cols = tape.value(input).cols();
        if cols != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: cols,
            });
        }
        let last = weights.len() - 1;
        let mut layers = Vec::with_capacity(weights.len());
        let mut h = input;
        for (k, &w) in weights.iter().enumerate() {
            let z = tape.matmul_t(h, w)?;
            h = if k == last { z } else { tape.relu(z)? };
            layers.push(h);
        }
        Ok(layers)
    }

    pub fn cast<G: Element>(&self) -> MlpNetwork<G> {
        MlpNetwork {
            weights: self.weights.iter().map(Tensor::cast).collect(),
        }
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 3 {
        return Err(Error::Config(format!(
            "network dims {dims:?} describe fewer than 2 layers"
        )));
    }
    if dims.contains(&0) {
        return Err(Error::Config(format!("network dims {dims:?} contain a zero width")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_reproducible() {
        let a = MlpNetwork::<f32>::init(&[2, 8, 4], 7).unwrap();
        let b = MlpNetwork::<f32>::init(&[2, 8, 4], 7).unwrap();
        assert_eq!(a, b);
        let c = MlpNetwork::<f32>::init(&[2, 8, 4], 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn too_few_dims_is_an_error() {
        assert!(MlpNetwork::<f32>::init(&[2], 0).is_err());
        assert!(MlpNetwork::<f32>::init(&[], 0).is_err());
        assert!(MlpNetwork::<f32>::init(&[2, 3], 0).is_err());
        assert!(MlpNetwork::<f32>::init(&[2, 0, 3], 0).is_err());
    }

    #[test]
    fn weight_shapes_follow_dims() {
        let net = MlpNetwork::<f32>::init(&[64, 128, 128, 10], 1).unwrap();
        let shapes: Vec<_> = net.weights().iter().map(|w| w.shape().to_vec()).collect();
        assert_eq!(shapes, vec![vec![128, 64], vec![128, 128], vec![10, 128]]);
        assert_eq!(net.dims(), vec![64, 128, 128, 10]);
        assert_eq!(net.depth(), 3);
        assert_eq!(net.num_classes(), 10);
    }

    #[test]
    fn zero_weights_give_zero_features() {
        let weights = vec![Tensor::<f64>::zeros(vec![3, 2]), Tensor::zeros(vec![2, 3])];
        let net = MlpNetwork::from_weights(weights).unwrap();
        let x = Tensor::from_rows(&[vec![1.0, -2.0], vec![0.5, 4.0]]).unwrap();
        let acts = net.forward_features(&x).unwrap();
        assert!(acts.layers.iter().all(|a| a.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn hand_evaluated_two_layer_net() {
        let w1 = Tensor::<f64>::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let w2 = Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let net = MlpNetwork::from_weights(vec![w1, w2]).unwrap();
        let x = Tensor::from_rows(&[vec![3.0, -2.0]]).unwrap();
        let acts = net.forward_features(&x).unwrap();
        assert_eq!(acts.layers[0].data(), &[3.0, 0.0]);
        assert_eq!(acts.layers[1].data(), &[3.0]);
    }

    #[test]
    fn batch_shapes() {
        let net = MlpNetwork::<f32>::init(&[64, 128, 128, 10], 3).unwrap();
        let x = Tensor::zeros(vec![256, 64]);
        let acts = net.forward_features(&x).unwrap();
        let shapes: Vec<_> = acts.layers.iter().map(|a| a.shape().to_vec()).collect();
        assert_eq!(shapes, vec![vec![256, 128], vec![256, 128], vec![256, 10]]);
        assert!(net.forward_features(&Tensor::zeros(vec![4, 63])).is_err());
    }

    #[test]
    fn mismatched_chain_is_rejected() {
        let weights = vec![Tensor::<f32>::zeros(vec![3, 2]), Tensor::zeros(vec![2, 4])];
        assert!(matches!(
            MlpNetwork::from_weights(weights),
            Err(Error::DimensionMismatch { expected: 3, found: 4 })
        ));
    }

    #[test]
    fn tape_forward_matches_plain_forward() {
        let net = MlpNetwork::<f64>::init(&[5, 7, 6, 3], 11).unwrap();
        let x = Tensor::from_f64(vec![4, 5], &(0..20).map(|v| (v as f64 * 0.37).sin()).collect::<Vec<_>>()).unwrap();
        let plain = net.forward_features(&x).unwrap();
        let mut tape = Tape::new();
        let input = tape.constant(x);
        let w = net.weight_vars(&mut tape, false);
        let layers = net.forward_tape(&mut tape, input, &w).unwrap();
        for (var, expected) in layers.iter().zip(&plain.layers) {
            assert_eq!(tape.value(*var), expected);
        }
    }
}

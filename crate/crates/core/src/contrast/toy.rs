//! Critic training on discrete joints with known MI.
//!
//! Each batch draws `L` samples `(x_k, y_k)` from the joint. Sample `k`
//! carries label `k` on both sides, so `(k, k)` are the positive pairs and
//! `(k, l ≠ k)` pair `x_k` with an independent `y_l`. The bound therefore uses
//! `C = L`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::Serialize;

use super::critic::{CriticDepth, CriticParams, Side};
use super::mi::discrete_mi;
use super::nce::{mi_lower_bound, nce_layer_loss, uninformed_bound};
use super::pairs::build_pairs;
use crate::nn::SgdState;
use crate::seed;
use crate::tensor::{Tape, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ToyCriticConfig {
    /// Samples per batch; also the `C` of the bound.
    pub batch: usize,
    pub steps: usize,
    pub lr: f64,
    pub momentum: f64,
    pub embed_dim: usize,
    pub tau: f64,
    /// Fresh batches averaged for the final bound.
    pub eval_batches: usize,
    /// Train on one fixed batch instead of a fresh batch per step.
    pub fixed_batch: bool,
    pub seed: u64,
}

impl Default for ToyCriticConfig {
    fn default() -> Self {
        Self {
            batch: 32,
            steps: 2000,
            lr: 0.01,
            momentum: 0.9,
            embed_dim: 16,
            tau: 0.1,
            eval_batches: 200,
            fixed_batch: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyBoundReport {
    pub true_mi: f64,
    /// Mean bound over the evaluation batches.
    pub bound: f64,
    pub uninformed: f64,
    pub classes: usize,
    /// Bound on the training batch at every step.
    pub trace: Vec<f64>,
}

struct JointSampler {
    index: WeightedIndex<f64>,
    rows: usize,
    cols: usize,
}

impl JointSampler {
    fn new(joint: &[Vec<f64>]) -> Result<Self> {
        let cols = joint[0].len();
        let flat: Vec<f64> = joint.iter().flatten().copied().collect();
        let index = WeightedIndex::new(&flat).map_err(|e| Error::Data(format!("bad joint table: {e}")))?;
        Ok(Self {
            index,
            rows: joint.len(),
            cols,
        })
    }

    /// One-hot encodings of `len` draws, as `(x, y)` matrices.
    fn batch(&self, len: usize, seed: u64, step: u64) -> Result<(Tensor<f64>, Tensor<f64>)> {
        let mut rng = seed::derived_rng(seed, "toy-joint", step);
        let mut xs = vec![0.0; len * self.rows];
        let mut ys = vec![0.0; len * self.cols];
        for k in 0..len {
            let cell = self.index.sample(&mut rng);
            xs[k * self.rows + cell / self.cols] = 1.0;
            ys[k * self.cols + cell % self.cols] = 1.0;
        }
        Ok((
            Tensor::new(vec![len, self.rows], xs)?,
            Tensor::new(vec![len, self.cols], ys)?,
        ))
    }
}

/// Trains a one-layer critic on `joint` and reports its bound next to the
/// true MI and the uninformed value.
pub fn train_toy_critic(joint: &[Vec<f64>], config: &ToyCriticConfig) -> Result<ToyBoundReport> {
    let true_mi = discrete_mi(joint)?;
    if config.batch < 2 {
        return Err(Error::Config("the toy batch needs at least 2 samples".into()));
    }
    let sampler = JointSampler::new(joint)?;
    let l = config.batch;
    let ids: Vec<usize> = (0..l).collect();
    let pairs = build_pairs(&ids, &ids, l)?;
    let mut critic = CriticParams::<f64>::init(
        &[sampler.rows],
        &[sampler.cols],
        config.embed_dim,
        CriticDepth::One,
        config.tau,
        seed::derive_seed(config.seed, "toy-critic", 0),
    )?;
    let mut sgd = SgdState::<f64>::new(config.lr, config.momentum, Vec::new())?;
    let mut trace = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let batch_step = if config.fixed_batch { 0 } else { step as u64 + 1 };
        let (x, y) = sampler.batch(l, config.seed, batch_step)?;
        let mut tape = Tape::new();
        let vars = critic.vars(&mut tape, true);
        let xv = tape.constant(x);
        let yv = tape.constant(y);
        let es = critic.embed_tape(&mut tape, &vars, 0, Side::Syn, xv)?;
        let er = critic.embed_tape(&mut tape, &vars, 0, Side::Real, yv)?;
        let out = nce_layer_loss(&mut tape, &pairs, es, er, config.tau, l)?;
        let loss = out.loss.expect("instance pairs always include positives");
        trace.push(out.bound.expect("bound accompanies the loss"));
        let grads = tape.backward(loss)?;
        for (slot, (param, var)) in critic.tensors_mut().into_iter().zip(vars.flat()).enumerate() {
            sgd.update(slot, step, param, grads.get(var).expect("critic weights are parameters"))?;
        }
    }
    let mut total = 0.0;
    for b in 0..config.eval_batches {
        let (x, y) = sampler.batch(l, config.seed ^ 0x5eed, b as u64)?;
        let es = critic.embed(0, Side::Syn, &x)?.values;
        let er = critic.embed(0, Side::Real, &y)?.values;
        total += mi_lower_bound(&pairs, &es, &er, config.tau, l)?.value;
    }
    Ok(ToyBoundReport {
        true_mi,
        bound: total / config.eval_batches.max(1) as f64,
        uninformed: uninformed_bound(l),
        classes: l,
        trace,
    })
}

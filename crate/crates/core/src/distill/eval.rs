use serde::{Deserialize, Serialize};

use super::DistillConfig;
use crate::data::{LabeledDataset, SyntheticSet};
use crate::nn::{evaluate_accuracy, train_classifier, MlpNetwork, SgdState, TrainOptions};
use crate::seed::derive_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean: f64,
    /// Population standard deviation over the networks.
    pub std: f64,
    /// Test accuracy of each network, in network order.
    pub accuracies: Vec<f64>,
}

impl EvalReport {
    pub fn from_accuracies(accuracies: Vec<f64>) -> Self {
        let n = accuracies.len().max(1) as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let std = (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self { mean, std, accuracies }
    }
}

fn train_and_score(syn: &SyntheticSet, test: &LabeledDataset, config: &DistillConfig, index: usize) -> Result<f64> {
    let dims = config.dims(syn.dim(), syn.num_classes());
    let net = MlpNetwork::init(&dims, derive_seed(config.seed, "eval-net", index as u64))?;
    let options = TrainOptions {
        epochs: config.eval_epochs,
        batch_size: config.eval_batch,
        seed: derive_seed(config.seed, "eval-shuffle", index as u64),
    };
    let sgd = SgdState::new(config.eval_lr, config.eval_momentum, Vec::new())?;
    let (net, _) = train_classifier(&net, syn.samples(), syn.labels(), &options, sgd)?;
    evaluate_accuracy(&net, test.samples(), test.labels())
}

/// Trains `config.eval_nets` fresh networks on the synthetic set and scores
/// each on `test`.
///
/// Networks are spread over up to `workers` threads. Every network has its
/// own seed, and results are collected by network index, so the report does
/// not depend on `workers`.
pub fn evaluate_protocol(
    syn: &SyntheticSet,
    test: &LabeledDataset,
    config: &DistillConfig,
    workers: usize,
) -> Result<EvalReport> {
    if syn.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if syn.dim() != test.dim() {
        return Err(Error::DimensionMismatch {
            expected: syn.dim(),
            found: test.dim(),
        });
    }
    let nets = config.eval_nets;
    let workers = workers.clamp(1, nets.max(1));
    let mut results: Vec<Option<Result<f64>>> = (0..nets).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..nets)
                        .step_by(workers)
                        .map(|i| (i, train_and_score(syn, test, config, i)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("evaluation worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    let accuracies = results
        .into_iter()
        .map(|r| r.expect("every network index is assigned"))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_accuracies(accuracies))
}

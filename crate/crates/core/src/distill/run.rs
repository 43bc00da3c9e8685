use serde::{Deserialize, Serialize};

use super::loss::{record_objective, total_loss, ObjectiveInputs};
use super::DistillConfig;
use crate::contrast::CriticParams;
use crate::data::{class_balanced_batch, init_synthetic, LabeledDataset, SyntheticSet};
use crate::nn::{evaluate_accuracy, train_classifier, MlpNetwork, SgdState, TrainOptions};
use crate::seed::derive_seed;
use crate::tensor::{Tape, TensorError};
use crate::{Error, Result};

/// One iteration's losses. `total` is recombined in 64-bit from the logged
/// parts, so `total = λ·weighted_nce + l_dd` holds to rounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub iteration: usize,
    /// Synthetic learning rate in effect for this iteration's step.
    pub lr: f64,
    pub l_dd: f64,
    /// `L^k_NCE` for every layer; all zero when the contrastive term is off.
    pub nce: Vec<f64>,
    pub weighted_nce: f64,
    pub total: f64,
    /// Per-layer bound `log(C−1) + mean_pos log d`; zero when off.
    pub bounds: Vec<f64>,
}

/// Whether the contrastive machinery is built at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContrastMode {
    Enabled,
    /// Base-loss-only pipeline: no critic and no syn-net.
    Disabled,
}

/// The frozen real-trained classifier.
pub fn pretrain_real_net(real: &LabeledDataset, config: &DistillConfig) -> Result<MlpNetwork<f32>> {
    let dims = config.dims(real.dim(), real.num_classes());
    let net = MlpNetwork::init(&dims, derive_seed(config.seed, "real-net", 0))?;
    let options = TrainOptions {
        epochs: config.pretrain_epochs,
        batch_size: config.pretrain_batch,
        seed: derive_seed(config.seed, "real-net-shuffle", 0),
    };
    let sgd = SgdState::new(config.pretrain_lr, 0.9, Vec::new())?;
    let (net, _) = train_classifier(&net, real.samples(), real.labels(), &options, sgd)?;
    Ok(net)
}

/// Mutable state of the outer loop.
#[derive(Debug, Clone)]
pub struct DistillState {
    config: DistillConfig,
    synthetic: SyntheticSet,
    critic: Option<CriticParams<f32>>,
    real_net: MlpNetwork<f32>,
    syn_net: Option<MlpNetwork<f32>>,
    syn_sgd: SgdState<f32>,
    critic_sgd: SgdState<f32>,
    iteration: usize,
}

fn diverged(iteration: usize, e: Error) -> Error {
    match e {
        Error::Tensor(TensorError::NonFinite { op }) => Error::Diverged {
            iteration,
            detail: format!("non-finite value produced by {op}"),
        },
        other => other,
    }
}

impl DistillState {
    pub fn new(config: &DistillConfig, real: &LabeledDataset, mode: ContrastMode) -> Result<Self> {
        Self::with_real_net(config, real, mode, pretrain_real_net(real, config)?)
    }

    /// Starts from an already trained real-net.
    pub fn with_real_net(
        config: &DistillConfig,
        real: &LabeledDataset,
        mode: ContrastMode,
        real_net: MlpNetwork<f32>,
    ) -> Result<Self> {
        config.validate()?;
        let expected = config.dims(real.dim(), real.num_classes());
        if real_net.dims() != expected {
            return Err(Error::Config(format!(
                "real-net dims {:?} do not match the configured {expected:?}",
                real_net.dims()
            )));
        }
        let synthetic = init_synthetic(real, config.ipc, config.init_mode, derive_seed(config.seed, "synthetic", 0))?;
        let critic = match mode {
            ContrastMode::Enabled => {
                let widths = &expected[1..];
                Some(CriticParams::init(
                    widths,
                    widths,
                    config.embed_dim,
                    config.critic_depth,
                    config.tau,
                    derive_seed(config.seed, "critic", 0),
                )?)
            }
            ContrastMode::Disabled => None,
        };
        Ok(Self {
            config: config.clone(),
            synthetic,
            critic,
            real_net,
            syn_net: None,
            syn_sgd: SgdState::new(config.syn_lr, config.syn_momentum, config.schedule())?,
            critic_sgd: SgdState::new(config.critic_lr, config.critic_momentum, Vec::new())?,
            iteration: 0,
        })
    }

    pub fn synthetic(&self) -> &SyntheticSet {
        &self.synthetic
    }

    pub fn real_net(&self) -> &MlpNetwork<f32> {
        &self.real_net
    }

    pub fn syn_net(&self) -> Option<&MlpNetwork<f32>> {
        self.syn_net.as_ref()
    }

    pub fn critic(&self) -> Option<&CriticParams<f32>> {
        self.critic.as_ref()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn into_synthetic(self) -> SyntheticSet {
        self.synthetic
    }

    fn refresh_syn_net(&mut self) -> Result<()> {
        let dims = self.real_net.dims();
        let round = (self.iteration / self.config.refresh_period) as u64;
        let net = MlpNetwork::init(&dims, derive_seed(self.config.seed, "syn-net", round))?;
        let options = TrainOptions {
            epochs: self.config.refresh_steps,
            batch_size: self.synthetic.len(),
            seed: derive_seed(self.config.seed, "syn-net-shuffle", round),
        };
        let sgd = SgdState::new(self.config.refresh_lr, 0.9, Vec::new())?;
        let (net, _) = train_classifier(&net, self.synthetic.samples(), self.synthetic.labels(), &options, sgd)?;
        self.syn_net = Some(net);
        Ok(())
    }

    /// Runs one outer iteration and returns its losses.
    pub fn step(&mut self, real: &LabeledDataset) -> Result<LossBreakdown> {
        let it = self.iteration;
        self.step_inner(real).map_err(|e| diverged(it, e))
    }

    fn step_inner(&mut self, real: &LabeledDataset) -> Result<LossBreakdown> {
        let it = self.iteration;
        let config = &self.config;
        if self.critic.is_some() && it % config.refresh_period == 0 {
            self.refresh_syn_net()?;
        }
        let config = &self.config;
        let batch = class_balanced_batch(real, config.real_per_class, derive_seed(config.seed, "real-batch", 0), it as u64)?;
        let (x_real, y_real) = real.gather(&batch)?;

        let mut tape = Tape::new();
        let x_syn = tape.param(self.synthetic.samples().clone());
        let critic_vars = self.critic.as_ref().map(|c| c.vars(&mut tape, true));
        let syn_net = self.syn_net.as_ref().unwrap_or(&self.real_net);
        let inputs = ObjectiveInputs {
            real_net: &self.real_net,
            syn_net,
            critic: self.critic.as_ref().zip(critic_vars.as_ref()),
            real_batch: &x_real,
            real_labels: &y_real,
            syn_labels: self.synthetic.labels(),
            num_classes: real.num_classes(),
            lambda: config.lambda,
            beta: config.beta,
        };
        let objective = record_objective(&mut tape, x_syn, &inputs)?;

        let depth = self.real_net.depth();
        let l_dd = tape.scalar(objective.dm)? as f64;
        let nce: Vec<f64> = if objective.nce.is_empty() {
            vec![0.0; depth]
        } else {
            objective
                .nce
                .iter()
                .map(|v| v.map_or(Ok(0.0), |v| tape.scalar(v).map(|s| s as f64)))
                .collect::<std::result::Result<_, _>>()?
        };
        let bounds: Vec<f64> = if objective.bounds.is_empty() {
            vec![0.0; depth]
        } else {
            objective.bounds.iter().map(|b| b.unwrap_or(0.0)).collect()
        };
        let (weighted_nce, total) = total_loss(&nce, l_dd, config.lambda, config.beta, depth)?;
        if !total.is_finite() {
            return Err(Error::Diverged {
                iteration: it,
                detail: format!("total {total}, L_DD {l_dd}, NCE {nce:?}"),
            });
        }
        let lr = self.syn_sgd.lr_at(it);

        let grads = tape.backward(objective.total)?;
        let g_syn = grads.get(x_syn).expect("synthetic samples are parameters");
        self.syn_sgd.update(0, it, self.synthetic.samples_mut(), g_syn)?;
        if let (Some(critic), Some(vars)) = (self.critic.as_mut(), critic_vars.as_ref()) {
            for (slot, (param, var)) in critic.tensors_mut().into_iter().zip(vars.flat()).enumerate() {
                if let Some(g) = grads.get(var) {
                    self.critic_sgd.update(slot, it, param, g)?;
                }
            }
        }
        self.iteration += 1;
        Ok(LossBreakdown {
            iteration: it,
            lr,
            l_dd,
            nce,
            weighted_nce,
            total,
            bounds,
        })
    }
}

/// Result of a full run.
#[derive(Debug, Clone)]
pub struct DistillOutcome {
    pub synthetic: SyntheticSet,
    pub trace: Vec<LossBreakdown>,
    pub real_net: MlpNetwork<f32>,
    pub syn_net: Option<MlpNetwork<f32>>,
    pub real_train_accuracy: f64,
}

pub fn distill_run(config: &DistillConfig, real: &LabeledDataset) -> Result<DistillOutcome> {
    distill_run_with(config, real, ContrastMode::Enabled)
}

pub fn distill_run_with(config: &DistillConfig, real: &LabeledDataset, mode: ContrastMode) -> Result<DistillOutcome> {
    config.validate()?;
    let real_net = pretrain_real_net(real, config)?;
    let real_train_accuracy = evaluate_accuracy(&real_net, real.samples(), real.labels())?;
    log::info!("real-net train accuracy {real_train_accuracy:.4}");
    let mut state = DistillState::with_real_net(config, real, mode, real_net)?;
    let mut trace = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        let b = state.step(real)?;
        if b.iteration % 100 == 0 {
            log::debug!("iter {} total {:.6} L_DD {:.6}", b.iteration, b.total, b.l_dd);
        }
        trace.push(b);
    }
    Ok(DistillOutcome {
        synthetic: state.synthetic,
        trace,
        real_net: state.real_net,
        syn_net: state.syn_net,
        real_train_accuracy,
    })
}

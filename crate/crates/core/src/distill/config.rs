use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contrast::CriticDepth;
use crate::data::InitMode;
use crate::{Error, Result};

/// Every knob of a distillation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    /// Weight of the contrastive term.
    pub lambda: f64,
    /// Base of the per-layer contrastive weights.
    pub beta: f64,
    pub tau: f64,
    pub embed_dim: usize,
    pub critic_depth: CriticDepth,
    pub critic_lr: f64,
    pub critic_momentum: f64,
    pub ipc: usize,
    pub init_mode: InitMode,
    pub iterations: usize,
    pub syn_lr: f64,
    pub syn_momentum: f64,
    /// Iterations at which the synthetic learning rate is multiplied by
    /// `milestone_factor`.
    pub milestones: Vec<usize>,
    pub milestone_factor: f64,
    pub real_per_class: usize,
    /// Hidden widths of every network; input and output widths come from the data.
    pub hidden: Vec<usize>,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub pretrain_batch: usize,
    /// The syn-net is re-initialized every `refresh_period` iterations...
    pub refresh_period: usize,
    /// ...and trained for this many full-batch steps on the current synthetic set.
    pub refresh_steps: usize,
    pub refresh_lr: f64,
    pub eval_nets: usize,
    pub eval_epochs: usize,
    pub eval_lr: f64,
    pub eval_momentum: f64,
    pub eval_batch: usize,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            lambda: 0.8,
            beta: 2.0,
            tau: 0.1,
            embed_dim: 128,
            critic_depth: CriticDepth::One,
            critic_lr: 0.01,
            critic_momentum: 0.5,
            ipc: 10,
            init_mode: InitMode::RealSample,
            iterations: 5000,
            syn_lr: 0.1,
            syn_momentum: 0.5,
            milestones: vec![1800, 2800],
            milestone_factor: 0.5,
            real_per_class: 25,
            hidden: vec![128, 128],
            pretrain_epochs: 20,
            pretrain_lr: 0.01,
            pretrain_batch: 256,
            refresh_period: 100,
            refresh_steps: 50,
            refresh_lr: 0.01,
            eval_nets: 5,
            eval_epochs: 300,
            eval_lr: 0.01,
            eval_momentum: 0.9,
            eval_batch: 256,
            seed: 0,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be a positive number, got {v}")))
    }
}

fn momentum(name: &str, v: f64) -> Result<()> {
    if (0.0..1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")))
    }
}

fn nonzero(name: &str, v: usize) -> Result<()> {
    if v > 0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be at least 1")))
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be ≥ 0, got {}", self.lambda)));
        }
        positive("beta", self.beta)?;
        positive("tau", self.tau)?;
        positive("critic_lr", self.critic_lr)?;
        positive("syn_lr", self.syn_lr)?;
        positive("milestone_factor", self.milestone_factor)?;
        positive("pretrain_lr", self.pretrain_lr)?;
        positive("refresh_lr", self.refresh_lr)?;
        positive("eval_lr", self.eval_lr)?;
        momentum("critic_momentum", self.critic_momentum)?;
        momentum("syn_momentum", self.syn_momentum)?;
        momentum("eval_momentum", self.eval_momentum)?;
        nonzero("iterations", self.iterations)?;
        nonzero("ipc", self.ipc)?;
        nonzero("real_per_class", self.real_per_class)?;
        nonzero("pretrain_batch", self.pretrain_batch)?;
        nonzero("refresh_period", self.refresh_period)?;
        nonzero("eval_nets", self.eval_nets)?;
        nonzero("eval_batch", self.eval_batch)?;
        if self.critic_depth != CriticDepth::None {
            nonzero("embed_dim", self.embed_dim)?;
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(format!(
                "hidden widths must be a nonempty list of positive sizes, got {:?}",
                self.hidden
            )));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "milestones must be strictly increasing, got {:?}",
                self.milestones
            )));
        }
        if let Some(&m) = self.milestones.iter().find(|&&m| m == 0 || m >= self.iterations) {
            return Err(Error::Config(format!(
                "milestone {m} lies outside the iteration range 1..{}",
                self.iterations
            )));
        }
        Ok(())
    }

    /// The `(iteration, multiplier)` schedule for the synthetic samples.
    pub fn schedule(&self) -> Vec<(usize, f64)> {
        self.milestones.iter().map(|&m| (m, self.milestone_factor)).collect()
    }

    /// Network widths `[d, hidden…, C]`.
    pub fn dims(&self, input: usize, classes: usize) -> Vec<usize> {
        let mut dims = vec![input];
        dims.extend(&self.hidden);
        dims.push(classes);
        dims
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = DistillConfig::default();
        c.validate().unwrap();
        assert_eq!(c.schedule(), vec![(1800, 0.5), (2800, 0.5)]);
        assert_eq!(c.dims(64, 10), vec![64, 128, 128, 10]);
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn invariants() {
        let bad = [
            DistillConfig { lambda: -0.1, ..Default::default() },
            DistillConfig { beta: 0.0, ..Default::default() },
            DistillConfig { iterations: 0, ..Default::default() },
            DistillConfig { iterations: 1000, ..Default::default() },
            DistillConfig { milestones: vec![10, 5], ..Default::default() },
            DistillConfig { hidden: vec![], ..Default::default() },
            DistillConfig { tau: 0.0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let c = DistillConfig::default();
        let back: DistillConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        let partial: DistillConfig = serde_json::from_str(r#"{"lambda": 0.0}"#).unwrap();
        assert_eq!(partial.lambda, 0.0);
        assert!(serde_json::from_str::<DistillConfig>(r#"{"lamda": 0.0}"#).is_err());
    }
}

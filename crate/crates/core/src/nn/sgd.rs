use crate::tensor::{Element, Tensor};
use crate::{Error, Result};

/// Momentum SGD with a piecewise-constant learning-rate schedule.
///
/// Each milestone `(iteration, multiplier)` scales the rate from that
/// iteration on; multipliers compound, so `[(1800, 0.5), (2800, 0.5)]` takes a
/// base rate of 0.1 to 0.05 and then 0.025.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState<F = f32> {
    lr: f64,
    momentum: f64,
    schedule: Vec<(usize, f64)>,
    velocity: Vec<Option<Vec<F>>>,
}

impl<F: Element> SgdState<F> {
    pub fn new(lr: f64, momentum: f64, schedule: Vec<(usize, f64)>) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be > 0, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        if schedule.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Config(format!(
                "learning-rate milestones must be strictly increasing: {schedule:?}"
            )));
        }
        if let Some((it, m)) = schedule.iter().find(|(_, m)| !(*m > 0.0 && m.is_finite())) {
            return Err(Error::Config(format!("milestone {it} has invalid multiplier {m}")));
        }
        Ok(Self {
            lr,
            momentum,
            schedule,
            velocity: Vec::new(),
        })
    }

    pub fn base_lr(&self) -> f64 {
        self.lr
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn schedule(&self) -> &[(usize, f64)] {
        &self.schedule
    }

    pub fn lr_at(&self, iteration: usize) -> f64 {
        self.schedule
            .iter()
            .filter(|(at, _)| iteration >= *at)
            .fold(self.lr, |lr, (_, m)| lr * m)
    }

    /// `v ← μ·v + g; p ← p − lr·v` for the parameter tracked in `slot`.
    pub fn update(&mut self, slot: usize, iteration: usize, param: &mut Tensor<F>, grad: &[F]) -> Result<()> {
        if grad.len() != param.len() {
            return Err(Error::DimensionMismatch {
                expected: param.len(),
                found: grad.len(),
            });
        }
        if self.velocity.len() <= slot {
            self.velocity.resize(slot + 1, None);
        }
        let lr = F::of_f64(self.lr_at(iteration));
        let mu = F::of_f64(self.momentum);
        let v = self.velocity[slot].get_or_insert_with(|| vec![F::zero(); grad.len()]);
        if v.len() != grad.len() {
            return Err(Error::DimensionMismatch {
                expected: v.len(),
                found: grad.len(),
            });
        }
        for (vi, &g) in v.iter_mut().zip(grad) {
            *vi = mu * *vi + g;
        }
        let v = &*v;
        param.update(|i, p| p - lr * v[i])?;
        Ok(())
    }

    /// Forgets accumulated velocity (used when a network is re-initialized).
    pub fn reset(&mut self) {
        self.velocity.clear();
    }
}

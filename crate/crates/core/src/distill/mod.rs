//! The outer distillation loop.
//!
//! A classifier trained once on the real data (the real-net) stays frozen.
//! Each iteration matches per-class mean features of the synthetic set to a
//! class-balanced real batch, and adds the layer-weighted contrastive loss
//! between syn-net features of the synthetic samples and real-net features of
//! the real batch. The syn-net is periodically re-initialized and retrained on
//! the current synthetic set.

mod config;
mod eval;
mod loss;
mod run;
mod trace;

pub use config::DistillConfig;
pub use eval::{evaluate_protocol, EvalReport};
pub use loss::{
    dm_base_loss, dm_base_loss_tape, layer_weights, record_objective, total_loss, ObjectiveInputs, ObjectiveVars,
};
pub use run::{
    distill_run, distill_run_with, pretrain_real_net, ContrastMode, DistillOutcome, DistillState, LossBreakdown,
};
pub use trace::{load_trace, save_trace, trace_header, write_trace};

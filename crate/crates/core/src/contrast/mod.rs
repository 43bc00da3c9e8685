//! Contrastive mutual-information machinery.
//!
//! Synthetic and real activations of the same class form positive pairs, all
//! other combinations are negatives. A critic `d = σ(⟨g(a_s), g(a_r)⟩ / τ)` on
//! unit-norm embeddings scores pairs, and the noise-contrastive loss trained on
//! it yields the lower bound `I ≥ log(C−1) + E_pos[log d]`.

mod critic;
mod mi;
mod nce;
mod pairs;
mod toy;

pub use critic::{
    critic_score, normalize_rows, CriticDepth, CriticParams, CriticVars, Embedded, LayerCritic, Side,
};
pub use mi::{discrete_mi, mi_invariance_check};
pub use nce::{
    mi_bound_from_scores, mi_lower_bound, nce_layer_loss, nce_loss_from_scores, uninformed_bound, MiEstimate,
    NceLoss, NceValue, NceWarning, LOG_EPS,
};
pub use pairs::{build_pairs, PairBatch};
pub use toy::{train_toy_critic, ToyBoundReport, ToyCriticConfig};

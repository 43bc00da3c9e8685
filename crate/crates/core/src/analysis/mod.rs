//! Representation similarity between networks.
//!
//! Linear-kernel centered kernel alignment (CKA) built on the
//! Hilbert-Schmidt independence criterion, computed in 64-bit, plus a
//! layer-by-layer heatmap of two networks fed two datasets with CSV and SVG
//! export.

mod cka;
mod heatmap;

pub use cka::{
    center_gram, cka, features_to_matrix, gram_linear, hsic, hsic_trace, CenteredGram, CkaValue, GramMatrix,
};
pub use heatmap::{
    cka_heatmap, class_aligned_sample, render_heatmap_svg, save_heatmap_csv, save_heatmap_svg, write_heatmap_csv,
    CkaHeatmap,
};

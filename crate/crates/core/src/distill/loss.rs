use std::collections::BTreeMap;

use crate::contrast::{build_pairs, nce_layer_loss, CriticParams, CriticVars, NceWarning, Side};
use crate::nn::{LayerActivations, MlpNetwork};
use crate::tensor::{Element, Tape, Tensor, Var};
use crate::{Error, Result};

/// Weight of layer `k` (1-based) in the combined objective, `1 / β^{K−1−k}`.
pub fn layer_weights(beta: f64, layers: usize) -> Vec<f64> {
    (1..=layers)
        .map(|k| beta.powi(k as i32 + 1 - layers as i32))
        .collect()
}

/// Weighted contrastive sum `Σ_k L^k / β^{K−1−k}` and the total
/// `λ·(that sum) + L_DD`.
pub fn total_loss(nce: &[f64], dm: f64, lambda: f64, beta: f64, layers: usize) -> Result<(f64, f64)> {
    if nce.len() != layers {
        return Err(Error::DimensionMismatch {
            expected: layers,
            found: nce.len(),
        });
    }
    let weighted: f64 = nce.iter().zip(layer_weights(beta, layers)).map(|(l, w)| l * w).sum();
    Ok((weighted, lambda * weighted + dm))
}

/// Row indices per class, keyed by class id.
fn groups(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut g: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        g.entry(l).or_default().push(i);
    }
    g
}

fn matching_groups(real_labels: &[usize], syn_labels: &[usize]) -> Result<BTreeMap<usize, Vec<usize>>> {
    let real = groups(real_labels);
    let syn = groups(syn_labels);
    if let Some(c) = real.keys().find(|c| !syn.contains_key(c)).or_else(|| syn.keys().find(|c| !real.contains_key(c))) {
        return Err(Error::Data(format!("class {c} is present on only one side of the matching")));
    }
    if syn.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(syn)
}

/// Per-class mean rows of `x`, classes in ascending order.
fn class_means<F: Element>(x: &Tensor<F>, labels: &[usize]) -> Result<Tensor<F>> {
    let cols = x.cols();
    let mut data = Vec::new();
    for rows in groups(labels).values() {
        let mut acc = vec![0f64; cols];
        for &r in rows {
            for (a, v) in acc.iter_mut().zip(x.row(r)) {
                *a += v.as_f64();
            }
        }
        data.extend(acc.into_iter().map(|a| F::of_f64(a / rows.len() as f64)));
    }
    let classes = data.len() / cols.max(1);
    Ok(Tensor::new(vec![classes, cols], data)?)
}

fn check_layers<F: Element>(real: &LayerActivations<F>, syn_widths: &[usize]) -> Result<()> {
    if real.depth() != syn_widths.len() {
        return Err(Error::DimensionMismatch {
            expected: real.depth(),
            found: syn_widths.len(),
        });
    }
    for (r, &w) in real.layers.iter().zip(syn_widths) {
        if r.cols() != w {
            return Err(Error::DimensionMismatch {
                expected: r.cols(),
                found: w,
            });
        }
    }
    Ok(())
}

/// Distribution-matching loss: the squared distance between real and
/// synthetic per-class mean features, averaged over classes and layers.
pub fn dm_base_loss<F: Element>(
    real: &LayerActivations<F>,
    real_labels: &[usize],
    syn: &LayerActivations<F>,
    syn_labels: &[usize],
) -> Result<f64> {
    let widths: Vec<usize> = syn.layers.iter().map(Tensor::cols).collect();
    check_layers(real, &widths)?;
    let classes = matching_groups(real_labels, syn_labels)?.len();
    let mut total = 0.0;
    for (r, s) in real.layers.iter().zip(&syn.layers) {
        let mr = class_means(r, real_labels)?;
        let ms = class_means(s, syn_labels)?;
        total += mr
            .data()
            .iter()
            .zip(ms.data())
            .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
            .sum::<f64>();
    }
    Ok(total / (classes * real.depth()) as f64)
}

/// Tape version of [`dm_base_loss`] with the real side held constant.
pub fn dm_base_loss_tape<F: Element>(
    tape: &mut Tape<F>,
    real: &LayerActivations<F>,
    real_labels: &[usize],
    syn_layers: &[Var],
    syn_labels: &[usize],
) -> Result<Var> {
    let widths: Vec<usize> = syn_layers.iter().map(|&v| tape.value(v).cols()).collect();
    check_layers(real, &widths)?;
    let syn_groups = matching_groups(real_labels, syn_labels)?;
    let classes = syn_groups.len();
    let m = syn_labels.len();
    let mut avg = vec![F::zero(); classes * m];
    for (row, members) in syn_groups.values().enumerate() {
        let w = F::of_f64(1.0 / members.len() as f64);
        for &i in members {
            avg[row * m + i] = w;
        }
    }
    let avg = tape.constant(Tensor::new(vec![classes, m], avg)?);
    let mut total: Option<Var> = None;
    for (r, &s) in real.layers.iter().zip(syn_layers) {
        let target = tape.constant(class_means(r, real_labels)?);
        let means = tape.matmul(avg, s)?;
        let diff = tape.sub(means, target)?;
        let sq = tape.mul(diff, diff)?;
        let layer = tape.sum(sq)?;
        total = Some(match total {
            Some(t) => tape.add(t, layer)?,
            None => layer,
        });
    }
    let total = total.ok_or_else(|| Error::Data("no layers to match".into()))?;
    Ok(tape.scale(total, F::of_f64(1.0 / (classes * real.depth()) as f64))?)
}

/// Everything needed to record the combined objective for one iteration.
pub struct ObjectiveInputs<'a, F: Element> {
    pub real_net: &'a MlpNetwork<F>,
    pub syn_net: &'a MlpNetwork<F>,
    /// `None` runs the base loss alone.
    pub critic: Option<(&'a CriticParams<F>, &'a CriticVars)>,
    pub real_batch: &'a Tensor<F>,
    pub real_labels: &'a [usize],
    pub syn_labels: &'a [usize],
    pub num_classes: usize,
    pub lambda: f64,
    pub beta: f64,
}

/// Tape handles of one recorded objective.
#[derive(Debug, Clone)]
pub struct ObjectiveVars {
    pub dm: Var,
    /// Per-layer contrastive losses; empty when the contrastive term is off.
    pub nce: Vec<Option<Var>>,
    pub bounds: Vec<Option<f64>>,
    pub warnings: Vec<(usize, NceWarning)>,
    pub total: Var,
}

/// Records `λ·Σ_k L^k_NCE/β^{K−1−k} + L_DD` for the synthetic batch `x_syn`.
///
/// The base loss compares real-net features of both batches. The contrastive
/// term pairs syn-net features of `x_syn` with real-net features of the real
/// batch. It is skipped entirely when no critic is given or `λ = 0`.
pub fn record_objective<F: Element>(tape: &mut Tape<F>, x_syn: Var, inputs: &ObjectiveInputs<'_, F>) -> Result<ObjectiveVars> {
    let real_acts = inputs.real_net.forward_features(inputs.real_batch)?;
    let real_w = inputs.real_net.weight_vars(tape, false);
    let syn_through_real = inputs.real_net.forward_tape(tape, x_syn, &real_w)?;
    let dm = dm_base_loss_tape(tape, &real_acts, inputs.real_labels, &syn_through_real, inputs.syn_labels)?;

    let (critic, vars) = match inputs.critic {
        Some(c) if inputs.lambda != 0.0 => c,
        _ => {
            return Ok(ObjectiveVars {
                dm,
                nce: Vec::new(),
                bounds: Vec::new(),
                warnings: Vec::new(),
                total: dm,
            })
        }
    };
    let depth = inputs.real_net.depth();
    if critic.num_layers() != depth || inputs.syn_net.depth() != depth {
        return Err(Error::DimensionMismatch {
            expected: depth,
            found: critic.num_layers(),
        });
    }
    let syn_w = inputs.syn_net.weight_vars(tape, false);
    let syn_layers = inputs.syn_net.forward_tape(tape, x_syn, &syn_w)?;
    let pairs = build_pairs(inputs.syn_labels, inputs.real_labels, inputs.num_classes)?;
    let weights = layer_weights(inputs.beta, depth);
    let mut nce = Vec::with_capacity(depth);
    let mut bounds = Vec::with_capacity(depth);
    let mut warnings = Vec::new();
    let mut weighted: Option<Var> = None;
    for k in 0..depth {
        let es = critic.embed_tape(tape, vars, k, Side::Syn, syn_layers[k])?;
        let real_k = tape.constant(real_acts.layers[k].clone());
        let er = critic.embed_tape(tape, vars, k, Side::Real, real_k)?;
        let out = nce_layer_loss(tape, &pairs, es, er, critic.tau(), inputs.num_classes)?;
        warnings.extend(out.warnings.iter().map(|&w| (k, w)));
        if let Some(l) = out.loss {
            let term = tape.scale(l, F::of_f64(weights[k]))?;
            weighted = Some(match weighted {
                Some(w) => tape.add(w, term)?,
                None => term,
            });
        }
        nce.push(out.loss);
        bounds.push(out.bound);
    }
    let total = match weighted {
        Some(w) => {
            let scaled = tape.scale(w, F::of_f64(inputs.lambda))?;
            tape.add(scaled, dm)?
        }
        None => dm,
    };
    Ok(ObjectiveVars {
        dm,
        nce,
        bounds,
        warnings,
        total,
    })
}

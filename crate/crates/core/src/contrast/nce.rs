use serde::Serialize;

use super::critic::{check_tau, critic_score};
use super::PairBatch;
use crate::tensor::{Element, Tape, Tensor, Var};
use crate::{Error, Result};

/// Floor applied to every log argument.
pub const LOG_EPS: f64 = 1e-12;

/// Why part of a layer's contrastive loss was not computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NceWarning {
    /// No positive pairs: the whole layer loss is skipped.
    NoPositives,
    /// No negative pairs: only the positive term is used.
    NoNegatives,
}

/// A layer loss recorded on a tape.
#[derive(Debug, Clone, PartialEq)]
pub struct NceLoss {
    /// `None` when the layer was skipped.
    pub loss: Option<Var>,
    /// `log(C−1) + mean_pos log d`, from the same scores.
    pub bound: Option<f64>,
    pub warnings: Vec<NceWarning>,
}

/// A layer loss evaluated from precomputed critic scores.
#[derive(Debug, Clone, PartialEq)]
pub struct NceValue {
    pub loss: Option<f64>,
    pub warnings: Vec<NceWarning>,
}

/// An MI lower-bound estimate in nats.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiEstimate {
    pub value: f64,
    pub classes: usize,
    /// Number of positive pairs averaged.
    pub samples: u64,
    pub layer: Option<usize>,
}

fn check_classes(classes: usize) -> Result<()> {
    if classes < 2 {
        return Err(Error::Config(format!("the contrastive bound needs C ≥ 2, got {classes}")));
    }
    Ok(())
}

fn warnings_for(pairs: &PairBatch) -> Vec<NceWarning> {
    let mut w = Vec::new();
    if pairs.positives() == 0 {
        log::warn!("no positive pairs in batch; contrastive layer loss skipped");
        w.push(NceWarning::NoPositives);
    } else if pairs.negatives() == 0 {
        log::warn!("no negative pairs in batch; negative term dropped");
        w.push(NceWarning::NoNegatives);
    }
    w
}

/// Negated contrastive objective,
/// `−(mean_pos log d + (C−1)·mean_neg log(1−d))`, from critic scores.
pub fn nce_loss_from_scores(positive: &[f64], negative: &[f64], classes: usize) -> Result<NceValue> {
    check_classes(classes)?;
    if let Some(d) = positive.iter().chain(negative).find(|d| !(0.0..=1.0).contains(*d)) {
        return Err(Error::Data(format!("critic score {d} outside [0, 1]")));
    }
    let clog = |v: f64| v.max(LOG_EPS).ln();
    if positive.is_empty() {
        log::warn!("no positive pairs; contrastive layer loss skipped");
        return Ok(NceValue {
            loss: None,
            warnings: vec![NceWarning::NoPositives],
        });
    }
    let pos = positive.iter().map(|&d| clog(d)).sum::<f64>() / positive.len() as f64;
    let mut warnings = Vec::new();
    let neg = if negative.is_empty() {
        log::warn!("no negative pairs; negative term dropped");
        warnings.push(NceWarning::NoNegatives);
        0.0
    } else {
        negative.iter().map(|&d| clog(1.0 - d)).sum::<f64>() / negative.len() as f64
    };
    Ok(NceValue {
        loss: Some(-(pos + (classes - 1) as f64 * neg)),
        warnings,
    })
}

/// Records the layer loss for unit-norm embeddings `emb_syn (m×e)` and
/// `emb_real (n×e)` on `tape`.
pub fn nce_layer_loss<F: Element>(
    tape: &mut Tape<F>,
    pairs: &PairBatch,
    emb_syn: Var,
    emb_real: Var,
    tau: f64,
    classes: usize,
) -> Result<NceLoss> {
    check_tau(tau)?;
    check_classes(classes)?;
    let (m, n) = (tape.value(emb_syn).rows(), tape.value(emb_real).rows());
    if m != pairs.syn_len() || n != pairs.real_len() {
        return Err(Error::Data(format!(
            "embeddings are {m}×{n} but the pair batch is {}×{}",
            pairs.syn_len(),
            pairs.real_len()
        )));
    }
    let warnings = warnings_for(pairs);
    if warnings.contains(&NceWarning::NoPositives) {
        return Ok(NceLoss {
            loss: None,
            bound: None,
            warnings,
        });
    }
    let (pos_mask, neg_mask) = pairs.masks::<F>();
    let n_pos = pairs.positives() as f64;
    let n_neg = pairs.negatives() as f64;
    let eps = F::of_f64(LOG_EPS);

    let s = tape.matmul_t(emb_syn, emb_real)?;
    let z = tape.scale(s, F::of_f64(1.0 / tau))?;
    let d = tape.sigmoid(z)?;
    let log_d = tape.clamped_log(d, eps)?;

    let bound = {
        let v = tape.value(log_d).data();
        let sum: f64 = v.iter().zip(pos_mask.data()).map(|(l, p)| l.as_f64() * p.as_f64()).sum();
        ((classes - 1) as f64).ln() + sum / n_pos
    };

    let pos_weights = tape.constant(scaled(pos_mask, 1.0 / n_pos));
    let pos_terms = tape.mul(log_d, pos_weights)?;
    let mut objective = tape.sum(pos_terms)?;
    if n_neg > 0.0 {
        // 1 − σ(z) = σ(−z) keeps precision when d is close to 1
        let neg_z = tape.scale(z, F::of_f64(-1.0))?;
        let one_minus_d = tape.sigmoid(neg_z)?;
        let log_1md = tape.clamped_log(one_minus_d, eps)?;
        let neg_weights = tape.constant(scaled(neg_mask, (classes - 1) as f64 / n_neg));
        let neg_terms = tape.mul(log_1md, neg_weights)?;
        let neg_sum = tape.sum(neg_terms)?;
        objective = tape.add(objective, neg_sum)?;
    }
    let loss = tape.scale(objective, F::of_f64(-1.0))?;
    Ok(NceLoss {
        loss: Some(loss),
        bound: Some(bound),
        warnings,
    })
}

fn scaled<F: Element>(mask: Tensor<F>, c: f64) -> Tensor<F> {
    let c = F::of_f64(c);
    let shape = mask.shape().to_vec();
    Tensor::new(shape, mask.into_data().into_iter().map(|v| v * c).collect()).expect("finite weights")
}

/// `log(C−1) + mean_pos log d` for plain embedding matrices.
pub fn mi_lower_bound<F: Element>(
    pairs: &PairBatch,
    emb_syn: &Tensor<F>,
    emb_real: &Tensor<F>,
    tau: f64,
    classes: usize,
) -> Result<MiEstimate> {
    check_classes(classes)?;
    check_tau(tau)?;
    if emb_syn.rows() != pairs.syn_len() || emb_real.rows() != pairs.real_len() {
        return Err(Error::Data("embedding rows do not match the pair batch".into()));
    }
    if pairs.positives() == 0 {
        return Err(Error::Data("the MI bound needs at least one positive pair".into()));
    }
    let mut sum = 0.0;
    for (i, j) in pairs.positive_pairs() {
        sum += critic_score(emb_syn.row(i), emb_real.row(j), tau)?.max(LOG_EPS).ln();
    }
    Ok(MiEstimate {
        value: ((classes - 1) as f64).ln() + sum / pairs.positives() as f64,
        classes,
        samples: pairs.positives(),
        layer: None,
    })
}

/// `log(C−1) + mean log d` over positive-pair scores.
pub fn mi_bound_from_scores(positive: &[f64], classes: usize) -> Result<f64> {
    check_classes(classes)?;
    if positive.is_empty() {
        return Err(Error::Data("the MI bound needs at least one positive pair".into()));
    }
    let mean = positive.iter().map(|d| d.max(LOG_EPS).ln()).sum::<f64>() / positive.len() as f64;
    Ok(((classes - 1) as f64).ln() + mean)
}

/// The bound reached by a critic that scores every pair `1/C`.
pub fn uninformed_bound(classes: usize) -> f64 {
    ((classes - 1) as f64).ln() + (1.0 / classes as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrast::build_pairs;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_half_scores() {
        let v = nce_loss_from_scores(&[0.5, 0.5], &[0.5], 2).unwrap();
        assert_abs_diff_eq!(v.loss.unwrap(), 1.386_294_361_119_890_6, epsilon = 1e-12);
    }

    #[test]
    fn four_pair_example() {
        // independently computed: −(mean(ln .8, ln .6) + 2·mean(ln .7, ln .9))
        let v = nce_loss_from_scores(&[0.8, 0.6], &[0.3, 0.1], 3).unwrap();
        assert_abs_diff_eq!(v.loss.unwrap(), 0.829_020_047_136_658_9, epsilon = 1e-12);
    }

    #[test]
    fn perfect_critic_tends_to_zero() {
        let v = nce_loss_from_scores(&[1.0, 1.0], &[0.0], 4).unwrap();
        assert_eq!(v.loss.unwrap(), 0.0);
        let near = nce_loss_from_scores(&[1.0 - 1e-9], &[1e-9], 4).unwrap();
        assert!(near.loss.unwrap() > 0.0 && near.loss.unwrap() < 1e-8);
    }

    #[test]
    fn degenerate_pair_sets_warn() {
        let v = nce_loss_from_scores(&[], &[0.2], 2).unwrap();
        assert_eq!((v.loss, v.warnings), (None, vec![NceWarning::NoPositives]));
        let v = nce_loss_from_scores(&[0.5], &[], 2).unwrap();
        assert_eq!(v.warnings, vec![NceWarning::NoNegatives]);
        assert_abs_diff_eq!(v.loss.unwrap(), 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn bounds() {
        assert_abs_diff_eq!(mi_bound_from_scores(&[1.0, 1.0], 3).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(mi_bound_from_scores(&[0.5], 2).unwrap(), -(2f64.ln()), epsilon = 1e-15);
        assert!(mi_bound_from_scores(&[0.5], 1).is_err());
        assert_abs_diff_eq!(uninformed_bound(2), -(2f64.ln()), epsilon = 1e-15);
    }

    #[test]
    fn tape_loss_matches_score_form() {
        let es = Tensor::<f64>::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.8]]).unwrap();
        let er = Tensor::from_rows(&[vec![0.8, 0.6], vec![-1.0, 0.0]]).unwrap();
        let pairs = build_pairs(&[0, 1, 1], &[1, 0], 2).unwrap();
        let tau = 0.5;
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for i in 0..3 {
            for j in 0..2 {
                let d = critic_score(es.row(i), er.row(j), tau).unwrap();
                if pairs.is_positive(i, j) { pos.push(d) } else { neg.push(d) }
            }
        }
        let expected = nce_loss_from_scores(&pos, &neg, 2).unwrap().loss.unwrap();
        let mut tape = Tape::new();
        let a = tape.constant(es.clone());
        let b = tape.constant(er.clone());
        let out = nce_layer_loss(&mut tape, &pairs, a, b, tau, 2).unwrap();
        assert_abs_diff_eq!(tape.scalar(out.loss.unwrap()).unwrap(), expected, epsilon = 1e-12);
        let est = mi_lower_bound(&pairs, &es, &er, tau, 2).unwrap();
        assert_abs_diff_eq!(out.bound.unwrap(), est.value, epsilon = 1e-12);
        assert_eq!(est.samples, 3);
    }

    #[test]
    fn tape_loss_skips_layers_without_positives() {
        let pairs = build_pairs(&[0], &[1], 2).unwrap();
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap());
        let b = tape.constant(Tensor::from_rows(&[vec![0.0, 1.0]]).unwrap());
        let out = nce_layer_loss(&mut tape, &pairs, a, b, 0.1, 2).unwrap();
        assert!(out.loss.is_none());
        assert_eq!(out.warnings, vec![NceWarning::NoPositives]);
    }
}

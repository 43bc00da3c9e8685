use midistill_core::contrast::{
    build_pairs, discrete_mi, mi_invariance_check, nce_layer_loss, train_toy_critic, CriticDepth, CriticParams,
    Side, ToyCriticConfig,
};
use midistill_core::nn::SgdState;
use midistill_core::seed;
use midistill_core::tensor::{finite_difference_grad, relative_error, Tape, Tensor};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn balanced(classes: usize, per_class: usize) -> Vec<usize> {
    (0..classes).flat_map(|c| std::iter::repeat_n(c, per_class)).collect()
}

fn gaussian(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
    let mut rng = seed::rng(seed);
    let n = Normal::new(0.0, 1.0).unwrap();
    let data: Vec<f64> = (0..rows * cols).map(|_| n.sample(&mut rng)).collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

proptest! {
    #[test]
    fn pair_counts_match_closed_forms(classes in 1usize..12, ipc in 1usize..8, per_class in 1usize..40) {
        let p = build_pairs(&balanced(classes, ipc), &balanced(classes, per_class), classes).unwrap();
        let (m, n) = ((classes * ipc) as u64, (classes * per_class) as u64);
        prop_assert_eq!(p.positives() + p.negatives(), m * n);
        prop_assert_eq!(p.positives() * classes as u64, m * n);
        prop_assert_eq!(p.negatives() * classes as u64, (classes as u64 - 1) * m * n);
    }

    #[test]
    fn nce_gradient_matches_finite_differences(seed in 0u64..1000, classes in 2usize..4) {
        let m = classes * 2;
        let n = classes * 3;
        let syn = gaussian(m, 5, seed);
        let real = gaussian(n, 5, seed + 1);
        let pairs = build_pairs(&balanced(classes, 2), &balanced(classes, 3), classes).unwrap();
        let tau = 0.5;
        let loss_of = |x: &Tensor<f64>, tape: &mut Tape<f64>| {
            let s = tape.param(x.clone());
            let sn = tape.l2_normalize_rows(s)?;
            let r = tape.constant(real.clone());
            let rn = tape.l2_normalize_rows(r)?;
            let out = nce_layer_loss(tape, &pairs, sn, rn, tau, classes)?;
            Ok::<_, midistill_core::Error>((s, out.loss.unwrap()))
        };
        let mut tape = Tape::new();
        let (s, loss) = loss_of(&syn, &mut tape).unwrap();
        let analytic = tape.backward(loss).unwrap().get(s).unwrap().to_vec();
        let numeric = finite_difference_grad(
            |x| {
                let mut t = Tape::new();
                let (_, l) = loss_of(x, &mut t)?;
                Ok::<_, midistill_core::Error>(t.scalar(l)?)
            },
            &syn,
            1e-6,
        )
        .unwrap();
        prop_assert!(relative_error(&analytic, numeric.data()) < 1e-4);
    }

    #[test]
    fn relabeled_tables_keep_their_mi(rows in 1usize..7, cols in 1usize..7, seed in any::<u64>()) {
        let mut rng = seed::rng(seed);
        let raw: Vec<f64> = (0..rows * cols).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let joint: Vec<Vec<f64>> = raw.chunks(cols).map(|r| r.iter().map(|v| v / total).collect()).collect();
        let mut px: Vec<usize> = (0..rows).collect();
        let mut py: Vec<usize> = (0..cols).collect();
        px.shuffle(&mut rng);
        py.shuffle(&mut rng);
        let (a, b) = mi_invariance_check(&joint, &px, &py).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    /// Descending the contrastive loss in the synthetic embeddings raises the
    /// bound: the 10-step moving average never decreases.
    #[test]
    fn loss_descent_raises_the_bound(seed in 0u64..200) {
        let (classes, e, ipc, per_class, tau) = (4, 8, 2, 3, 0.1);
        let mut syn = gaussian(classes * ipc, e, seed);
        let mut real = vec![0.0; classes * per_class * e];
        for (i, row) in real.chunks_mut(e).enumerate() {
            row[i / per_class] = 1.0;
        }
        let real = Tensor::new(vec![classes * per_class, e], real).unwrap();
        let pairs = build_pairs(&balanced(classes, ipc), &balanced(classes, per_class), classes).unwrap();
        let mut sgd = SgdState::<f64>::new(0.01, 0.0, vec![]).unwrap();
        let mut trace = Vec::new();
        for step in 0..300 {
            let mut tape = Tape::new();
            let s = tape.param(syn.clone());
            let sn = tape.l2_normalize_rows(s).unwrap();
            let r = tape.constant(real.clone());
            let out = nce_layer_loss(&mut tape, &pairs, sn, r, tau, classes).unwrap();
            trace.push(out.bound.unwrap());
            let g = tape.backward(out.loss.unwrap()).unwrap();
            sgd.update(0, step, &mut syn, g.get(s).unwrap()).unwrap();
        }
        let smooth: Vec<f64> = trace.windows(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
        prop_assert!(smooth.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        prop_assert!(trace[299] > trace[0]);
    }
}

#[test]
fn trained_critic_bound_is_valid() {
    let four: Vec<Vec<f64>> = (0..4)
        .map(|i| (0..4).map(|j| if i == j { 0.2125 } else { 0.0125 }).collect())
        .collect();
    let informative = [
        vec![vec![0.5, 0.0], vec![0.0, 0.5]],
        vec![vec![0.4, 0.1], vec![0.1, 0.4]],
        four,
    ];
    let config = ToyCriticConfig::default();
    for joint in &informative {
        let r = train_toy_critic(joint, &config).unwrap();
        assert!((r.true_mi - discrete_mi(joint).unwrap()).abs() < 1e-15);
        assert!(r.bound <= r.true_mi + 0.05, "{r:?}");
        assert!(r.bound >= r.uninformed + 0.1, "{r:?}");
    }
    let independent = [vec![0.25, 0.25], vec![0.25, 0.25]];
    let r = train_toy_critic(&independent, &config).unwrap();
    assert!(r.bound <= r.true_mi + 0.05, "{r:?}");
}

#[test]
fn critic_embeddings_feed_the_loss() {
    let critic = CriticParams::<f64>::init(&[6], &[4], 8, CriticDepth::One, 0.1, 1).unwrap();
    let a = gaussian(4, 6, 1);
    let b = gaussian(6, 4, 2);
    let es = critic.embed(0, Side::Syn, &a).unwrap();
    let er = critic.embed(0, Side::Real, &b).unwrap();
    assert_eq!((es.values.shape(), er.values.shape()), (&[4usize, 8][..], &[6usize, 8][..]));
    assert_eq!(es.zero_rows + er.zero_rows, 0);
}

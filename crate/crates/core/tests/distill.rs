use midistill_core::contrast::{CriticDepth, CriticParams};
use midistill_core::data::{gen_gaussian_mixture, LabeledDataset, SyntheticSet};
use midistill_core::distill::*;
use midistill_core::nn::{evaluate_accuracy, MlpNetwork};
use midistill_core::seed::derived_rng;
use midistill_core::tensor::{finite_difference_grad, relative_error, Tape, Tensor};
use rand_distr::{Distribution, StandardNormal};

fn toy(seed: u64) -> LabeledDataset {
    gen_gaussian_mixture(4, 50, 2, 0.25, seed).unwrap()
}

fn small_config() -> DistillConfig {
    DistillConfig {
        ipc: 3,
        iterations: 40,
        milestones: vec![15, 30],
        hidden: vec![16, 16],
        embed_dim: 8,
        pretrain_epochs: 5,
        refresh_period: 10,
        refresh_steps: 5,
        eval_nets: 3,
        eval_epochs: 50,
        ..Default::default()
    }
}

fn gaussian(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
    let mut rng = derived_rng(seed, "test-gaussian", 0);
    let data: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

struct Fixture {
    real_net: MlpNetwork<f64>,
    syn_net: MlpNetwork<f64>,
    critic: CriticParams<f64>,
    real_batch: Tensor<f64>,
    real_labels: Vec<usize>,
    syn_labels: Vec<usize>,
    x_syn: Tensor<f64>,
}

fn fixture(seed: u64) -> Fixture {
    let dims = [3, 5, 4, 3];
    Fixture {
        real_net: MlpNetwork::init(&dims, seed).unwrap(),
        syn_net: MlpNetwork::init(&dims, seed + 1).unwrap(),
        critic: CriticParams::init(&dims[1..], &dims[1..], 4, CriticDepth::One, 0.5, seed + 2).unwrap(),
        real_batch: gaussian(6, 3, seed + 3),
        real_labels: vec![0, 0, 1, 1, 2, 2],
        syn_labels: vec![0, 1, 2],
        x_syn: gaussian(3, 3, seed + 4),
    }
}

/// Total objective and its gradient with respect to the synthetic samples.
fn objective(f: &Fixture, x: &Tensor<f64>, lambda: f64) -> (f64, Vec<f64>) {
    let mut tape = Tape::new();
    let x_syn = tape.param(x.clone());
    let vars = f.critic.vars(&mut tape, false);
    let inputs = ObjectiveInputs {
        real_net: &f.real_net,
        syn_net: &f.syn_net,
        critic: Some((&f.critic, &vars)),
        real_batch: &f.real_batch,
        real_labels: &f.real_labels,
        syn_labels: &f.syn_labels,
        num_classes: 3,
        lambda,
        beta: 2.0,
    };
    let out = record_objective(&mut tape, x_syn, &inputs).unwrap();
    let value = tape.scalar(out.total).unwrap();
    let grads = tape.backward(out.total).unwrap();
    (value, grads.get(x_syn).unwrap().to_vec())
}

#[test]
fn objective_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let f = fixture(seed);
        let (_, analytic) = objective(&f, &f.x_syn, 0.8);
        let numeric = finite_difference_grad::<std::convert::Infallible, _>(|x| Ok(objective(&f, x, 0.8).0), &f.x_syn, 1e-6).unwrap();
        let err = relative_error(&analytic, numeric.data());
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
}

#[test]
fn objective_gradient_is_linear_in_lambda() {
    let f = fixture(11);
    let (v0, g0) = objective(&f, &f.x_syn, 0.0);
    let (v1, g1) = objective(&f, &f.x_syn, 1.0);
    let (v, g) = objective(&f, &f.x_syn, 0.8);
    assert!((v - (0.8 * v1 + 0.2 * v0)).abs() < 1e-9);
    let combined: Vec<f64> = g0.iter().zip(&g1).map(|(a, b)| 0.2 * a + 0.8 * b).collect();
    assert!(relative_error(&g, &combined) < 1e-9);
}

#[test]
fn trace_is_additive_and_follows_the_schedule() {
    let real = toy(1);
    let cfg = small_config();
    let out = distill_run(&cfg, &real).unwrap();
    assert_eq!(out.trace.len(), cfg.iterations);
    let weights = layer_weights(cfg.beta, 3);
    for b in &out.trace {
        let weighted: f64 = b.nce.iter().zip(&weights).map(|(l, w)| l * w).sum();
        assert!((b.weighted_nce - weighted).abs() < 1e-9);
        assert!((b.total - (cfg.lambda * weighted + b.l_dd)).abs() < 1e-6);
        assert!(b.nce.iter().all(|&l| l > 0.0));
        let expected_lr = match b.iteration {
            0..=14 => 0.1,
            15..=29 => 0.05,
            _ => 0.025,
        };
        assert!((b.lr - expected_lr).abs() < 1e-12, "iteration {}: lr {}", b.iteration, b.lr);
    }
}

#[test]
fn lambda_zero_matches_the_base_pipeline_exactly() {
    let real = toy(2);
    let cfg = DistillConfig { lambda: 0.0, ..small_config() };
    let on = distill_run_with(&cfg, &real, ContrastMode::Enabled).unwrap();
    let off = distill_run_with(&cfg, &real, ContrastMode::Disabled).unwrap();
    assert_eq!(on.synthetic.samples().data(), off.synthetic.samples().data());
    assert!(off.syn_net.is_none());
    for b in &on.trace {
        assert!(b.nce.iter().chain(&b.bounds).all(|&v| v == 0.0));
        assert_eq!(b.total, b.l_dd);
    }
}

#[test]
fn real_net_and_labels_stay_fixed() {
    let real = toy(3);
    let cfg = small_config();
    let net = pretrain_real_net(&real, &cfg).unwrap();
    let mut state = DistillState::with_real_net(&cfg, &real, ContrastMode::Enabled, net.clone()).unwrap();
    let labels = state.synthetic().labels().to_vec();
    let start = state.synthetic().samples().clone();
    for _ in 0..12 {
        state.step(&real).unwrap();
    }
    assert_eq!(state.iteration(), 12);
    assert_eq!(state.real_net(), &net);
    assert_eq!(state.synthetic().labels(), labels.as_slice());
    assert_ne!(state.synthetic().samples().data(), start.data());
    assert!(state.syn_net().is_some());
}

#[test]
fn runs_are_deterministic() {
    let real = toy(4);
    let cfg = small_config();
    let a = distill_run(&cfg, &real).unwrap();
    let b = distill_run(&cfg, &real).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.synthetic.samples().data(), b.synthetic.samples().data());
    let test = toy(5);
    let ea = evaluate_protocol(&a.synthetic, &test, &cfg, 1).unwrap();
    let eb = evaluate_protocol(&b.synthetic, &test, &cfg, 3).unwrap();
    assert_eq!(ea, eb);
}

#[test]
fn pretrained_net_fits_a_separable_mixture() {
    let real = gen_gaussian_mixture(4, 100, 2, 0.2, 6).unwrap();
    let net = pretrain_real_net(&real, &DistillConfig::default()).unwrap();
    let acc = evaluate_accuracy(&net, real.samples(), real.labels()).unwrap();
    assert!(acc >= 0.95, "accuracy {acc}");
}

#[test]
fn distillation_lowers_the_objective() {
    let real = toy(7);
    let cfg = DistillConfig { iterations: 200, milestones: vec![], ..small_config() };
    let out = distill_run(&cfg, &real).unwrap();
    let head: f64 = out.trace[..10].iter().map(|b| b.total).sum();
    let tail: f64 = out.trace[190..].iter().map(|b| b.total).sum();
    assert!(tail < head, "head {head}, tail {tail}");
}

#[test]
fn noise_synthetic_set_scores_near_chance() {
    let test_labels: Vec<usize> = (0..1000).map(|i| i % 4).collect();
    let test_samples = gaussian(1000, 2, 8).cast::<f32>();
    let test = LabeledDataset::from_raw(test_samples, test_labels, 4, "noise").unwrap();
    let noise = gaussian(40, 2, 9).cast::<f32>();
    let syn = SyntheticSet::new(noise, 10, 4).unwrap();
    let cfg = DistillConfig { eval_epochs: 50, ..Default::default() };
    let report = evaluate_protocol(&syn, &test, &cfg, 2).unwrap();
    assert_eq!(report.accuracies.len(), 5);
    assert!((report.mean - 0.25).abs() < 0.06, "mean {}", report.mean);
}

#[test]
fn trace_file_round_trips() {
    let real = toy(10);
    let cfg = DistillConfig { iterations: 5, milestones: vec![], ..small_config() };
    let out = distill_run(&cfg, &real).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    save_trace(&out.trace, &path).unwrap();
    assert_eq!(load_trace(&path).unwrap(), out.trace);
}

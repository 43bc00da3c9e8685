//! The `mi-check` suite: reference MI values, relabeling invariance and
//! critic bound validity.

use midistill_core::contrast::{discrete_mi, mi_invariance_check, train_toy_critic, ToyCriticConfig};
use midistill_core::seed::derived_rng;
use rand::seq::SliceRandom;
use rand::Rng;

/// Reference value of the `[[.4, .1], [.1, .4]]` table, from an independent
/// brute-force sum.
pub const TOY_TABLE_MI: f64 = 0.192_744_757_021_757_53;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }

    fn failed(name: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Self::new(name, false, format!("error: {err}"))
    }
}

fn value_check(name: &str, joint: &[Vec<f64>], expected: f64, tol: f64) -> CheckResult {
    match discrete_mi(joint) {
        Ok(mi) => CheckResult::new(
            name,
            (mi - expected).abs() < tol,
            format!("MI {mi:.6} nats, expected {expected:.6} ± {tol:e}"),
        ),
        Err(e) => CheckResult::failed(name, e),
    }
}

/// Random joint tables up to 6×6 with random bijective relabelings.
pub fn invariance_check(cases: usize, seed: u64) -> CheckResult {
    let name = format!("relabeling invariance ({cases} tables)");
    let mut worst = 0f64;
    for case in 0..cases {
        let mut rng = derived_rng(seed, "invariance", case as u64);
        let (rows, cols) = (rng.random_range(2..=6), rng.random_range(2..=6));
        let raw: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let total: f64 = raw.iter().flatten().sum();
        let joint: Vec<Vec<f64>> = raw.iter().map(|r| r.iter().map(|v| v / total).collect()).collect();
        let mut px: Vec<usize> = (0..rows).collect();
        let mut py: Vec<usize> = (0..cols).collect();
        px.shuffle(&mut rng);
        py.shuffle(&mut rng);
        match mi_invariance_check(&joint, &px, &py) {
            Ok((before, after)) => worst = worst.max((before - after).abs()),
            Err(e) => return CheckResult::failed(name, format!("table {case}: {e}")),
        }
    }
    CheckResult::new(name, worst < 1e-12, format!("max |ΔMI| = {worst:e}"))
}

/// The informative joints whose bound must clear the uninformed value.
pub fn bound_joints() -> Vec<(&'static str, Vec<Vec<f64>>)> {
    let four: Vec<Vec<f64>> = (0..4)
        .map(|i| (0..4).map(|j| if i == j { 0.2125 } else { 0.0125 }).collect())
        .collect();
    vec![
        ("diagonal 2x2", vec![vec![0.5, 0.0], vec![0.0, 0.5]]),
        ("[[.4,.1],[.1,.4]]", vec![vec![0.4, 0.1], vec![0.1, 0.4]]),
        ("4-class near-diagonal", four),
    ]
}

fn bound_check(name: &str, joint: &[Vec<f64>], lower: bool) -> CheckResult {
    let name = format!("bound validity, {name}");
    match train_toy_critic(joint, &ToyCriticConfig::default()) {
        Ok(r) => {
            let below = r.bound <= r.true_mi + 0.05;
            let above = !lower || r.bound >= r.uninformed + 0.1;
            CheckResult::new(
                name,
                below && above,
                format!(
                    "bound {:.4}, true MI {:.4}, uninformed {:.4}",
                    r.bound, r.true_mi, r.uninformed
                ),
            )
        }
        Err(e) => CheckResult::failed(name, e),
    }
}

/// Runs the whole suite. `inject_fault` perturbs one reference value so the
/// failure path can be exercised.
pub fn run_self_checks(inject_fault: bool) -> Vec<CheckResult> {
    let toy_expected = if inject_fault { TOY_TABLE_MI + 1e-3 } else { TOY_TABLE_MI };
    let mut out = vec![
        value_check("independent 2x2", &[vec![0.25, 0.25], vec![0.25, 0.25]], 0.0, 1e-12),
        value_check("diagonal 2x2", &[vec![0.5, 0.0], vec![0.0, 0.5]], 2f64.ln(), 1e-12),
        value_check("[[.4,.1],[.1,.4]]", &[vec![0.4, 0.1], vec![0.1, 0.4]], toy_expected, 1e-6),
        invariance_check(100, 0),
    ];
    for (name, joint) in bound_joints() {
        out.push(bound_check(name, &joint, true));
    }
    out.push(bound_check("independent 2x2 (upper side)", &[vec![0.25, 0.25], vec![0.25, 0.25]], false));
    out
}

/// A fixed-width PASS/FAIL table.
pub fn render_report(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for r in results {
        s += &format!(
            "{:<4}  {:<width$}  {}\n",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    s += &format!("{} of {} checks passed\n", results.len() - failed, results.len());
    s
}

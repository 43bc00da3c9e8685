//! Subcommand implementations. Each returns a summary for the caller to
//! print; all artifacts go under the chosen output directory.

use std::path::{Path, PathBuf};

use midistill_core::analysis::{cka_heatmap, save_heatmap_csv, save_heatmap_svg, CkaHeatmap};
use midistill_core::data::{load_synthetic, save_synthetic, LabeledDataset, SyntheticSet};
use midistill_core::distill::{distill_run, evaluate_protocol, save_trace, DistillOutcome, EvalReport};
use midistill_core::nn::{load_checkpoint, save_checkpoint};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::selfcheck::{render_report, run_self_checks};

pub const CONFIG_FILE: &str = "config.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const SYNTHETIC_FILE: &str = "synthetic.midd";
pub const EVAL_FILE: &str = "eval.json";
pub const REAL_NET_FILE: &str = "real_net.midn";
pub const SYN_NET_FILE: &str = "syn_net.midn";

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(midistill_core::Error::from)? + "\n";
    write_text(path, &text)
}

fn check_workers(workers: usize) -> Result<(), CliError> {
    if workers == 0 {
        Err(CliError::Usage("--workers must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// What a finished `distill` run reports.
#[derive(Debug, Clone)]
pub struct DistillSummary {
    pub out: PathBuf,
    pub eval: EvalReport,
    pub real_train_accuracy: f64,
    pub final_total: f64,
}

fn write_run_dir(out: &Path, config: &RunConfig, outcome: &DistillOutcome, source: &str, eval: &EvalReport) -> Result<(), CliError> {
    write_text(&out.join(CONFIG_FILE), &config.to_json())?;
    save_trace(&outcome.trace, &out.join(TRACE_FILE))?;
    save_synthetic(&out.join(SYNTHETIC_FILE), &outcome.synthetic, source, &config.distill.hash())?;
    write_json(&out.join(EVAL_FILE), eval)?;
    save_checkpoint(&outcome.real_net, &out.join(REAL_NET_FILE))?;
    if let Some(net) = &outcome.syn_net {
        save_checkpoint(net, &out.join(SYN_NET_FILE))?;
    }
    Ok(())
}

/// Distills, evaluates and writes the run directory.
pub fn distill(config: &RunConfig, out: &Path, workers: usize) -> Result<DistillSummary, CliError> {
    check_workers(workers)?;
    let (train, test) = config.load_datasets()?;
    create_dir(out)?;
    log::info!(
        "distilling {} ({} samples, {} classes) for {} iterations",
        train.meta().name,
        train.len(),
        train.num_classes(),
        config.distill.iterations
    );
    let outcome = distill_run(&config.distill, &train)?;
    let eval = evaluate_protocol(&outcome.synthetic, &test, &config.distill, workers)?;
    write_run_dir(out, config, &outcome, &train.meta().name, &eval)?;
    Ok(DistillSummary {
        out: out.to_path_buf(),
        eval,
        real_train_accuracy: outcome.real_train_accuracy,
        final_total: outcome.trace.last().map_or(f64::NAN, |b| b.total),
    })
}

/// Trains the evaluation networks on a stored synthetic set and writes
/// `eval.json` into `out`.
pub fn eval(config: &RunConfig, synthetic: &Path, out: &Path, workers: usize) -> Result<EvalReport, CliError> {
    check_workers(workers)?;
    let loaded = load_synthetic(synthetic, Some(&config.distill.hash()))?;
    let (_, test) = config.load_datasets()?;
    let report = evaluate_protocol(&loaded.set, &test, &config.distill, workers)?;
    create_dir(out)?;
    write_json(&out.join(EVAL_FILE), &report)?;
    Ok(report)
}

/// One `(λ, β, seed)` cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub lambda: f64,
    pub beta: f64,
    pub seed: u64,
    pub result: Result<EvalReport, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummaryRow {
    pub lambda: f64,
    pub beta: f64,
    pub runs: usize,
    pub failed: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

/// Grid over `λ × β × seeds`. An empty list falls back to the configured
/// value, but at least one of the two must be given.
pub fn sweep(
    config: &RunConfig,
    lambdas: &[f64],
    betas: &[f64],
    seeds: &[u64],
    out: &Path,
    workers: usize,
) -> Result<(Vec<SweepCell>, Vec<SweepSummaryRow>), CliError> {
    check_workers(workers)?;
    if lambdas.is_empty() && betas.is_empty() {
        return Err(CliError::Usage("sweep needs a nonempty --lambdas or --betas grid".into()));
    }
    let lambdas = if lambdas.is_empty() { vec![config.distill.lambda] } else { lambdas.to_vec() };
    let betas = if betas.is_empty() { vec![config.distill.beta] } else { betas.to_vec() };
    let seeds = if seeds.is_empty() { vec![config.distill.seed] } else { seeds.to_vec() };
    create_dir(out)?;

    let mut cells = Vec::new();
    for &lambda in &lambdas {
        for &beta in &betas {
            for &seed in &seeds {
                let mut cell_config = config.clone();
                cell_config.distill.lambda = lambda;
                cell_config.distill.beta = beta;
                cell_config.distill.seed = seed;
                let result = run_cell(&cell_config, workers).map_err(|e| e.to_string());
                match &result {
                    Ok(r) => log::info!("λ={lambda} β={beta} seed={seed}: {:.4} ± {:.4}", r.mean, r.std),
                    Err(e) => log::warn!("λ={lambda} β={beta} seed={seed} failed: {e}"),
                }
                cells.push(SweepCell {
                    lambda,
                    beta,
                    seed,
                    result,
                });
            }
        }
    }
    let summary = summarize(&cells, &lambdas, &betas);
    write_sweep(&out.join("sweep.csv"), &cells)?;
    let path = out.join("sweep_summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(midistill_core::Error::from)?;
    for row in &summary {
        w.serialize(row).map_err(midistill_core::Error::from)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok((cells, summary))
}

fn run_cell(config: &RunConfig, workers: usize) -> Result<EvalReport, CliError> {
    config.distill.validate()?;
    let (train, test) = config.load_datasets()?;
    let outcome = distill_run(&config.distill, &train)?;
    Ok(evaluate_protocol(&outcome.synthetic, &test, &config.distill, workers)?)
}

fn summarize(cells: &[SweepCell], lambdas: &[f64], betas: &[f64]) -> Vec<SweepSummaryRow> {
    let mut rows = Vec::new();
    for &lambda in lambdas {
        for &beta in betas {
            let group: Vec<&SweepCell> = cells.iter().filter(|c| c.lambda == lambda && c.beta == beta).collect();
            let means: Vec<f64> = group.iter().filter_map(|c| c.result.as_ref().ok().map(|r| r.mean)).collect();
            let stats = (!means.is_empty()).then(|| EvalReport::from_accuracies(means.clone()));
            rows.push(SweepSummaryRow {
                lambda,
                beta,
                runs: group.len(),
                failed: group.len() - means.len(),
                mean: stats.as_ref().map(|s| s.mean),
                std: stats.as_ref().map(|s| s.std),
            });
        }
    }
    rows
}

fn write_sweep(path: &Path, cells: &[SweepCell]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(midistill_core::Error::from)?;
    w.write_record(["lambda", "beta", "seed", "status", "mean", "std", "error"])
        .map_err(midistill_core::Error::from)?;
    for c in cells {
        let (status, mean, std, err) = match &c.result {
            Ok(r) => ("ok", r.mean.to_string(), r.std.to_string(), String::new()),
            Err(e) => ("failed", String::new(), String::new(), e.clone()),
        };
        w.write_record([c.lambda.to_string(), c.beta.to_string(), c.seed.to_string(), status.into(), mean, std, err])
            .map_err(midistill_core::Error::from)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Where a heatmap side's samples come from: a split of the configured
/// dataset, or a stored synthetic set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataSource {
    Train,
    Test,
    Synthetic(PathBuf),
}

impl std::str::FromStr for DataSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "train" => DataSource::Train,
            "test" => DataSource::Test,
            path => DataSource::Synthetic(PathBuf::from(path)),
        })
    }
}

impl std::fmt::Display for DataSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DataSource::Train => f.write_str("train"),
            DataSource::Test => f.write_str("test"),
            DataSource::Synthetic(p) => write!(f, "{}", p.display()),
        }
    }
}

fn synthetic_dataset(set: &SyntheticSet) -> Result<LabeledDataset, CliError> {
    Ok(LabeledDataset::from_raw(
        set.samples().clone(),
        set.labels().to_vec(),
        set.num_classes(),
        "synthetic",
    )?)
}

/// Inputs of one `cka` invocation.
#[derive(Debug, Clone)]
pub struct CkaJob {
    pub net_a: PathBuf,
    pub data_a: DataSource,
    pub net_b: PathBuf,
    pub data_b: DataSource,
    pub samples: usize,
    pub seed: u64,
    pub svg: bool,
}

#[derive(Debug, Serialize)]
struct HeatmapMeta<'a> {
    net_a: String,
    data_a: String,
    net_b: String,
    data_b: String,
    #[serde(flatten)]
    heatmap: &'a CkaHeatmap,
}

pub fn cka(config: &RunConfig, job: &CkaJob, out: &Path, workers: usize) -> Result<CkaHeatmap, CliError> {
    check_workers(workers)?;
    let needs_real = [&job.data_a, &job.data_b].iter().any(|d| !matches!(d, DataSource::Synthetic(_)));
    let real = if needs_real { Some(config.load_datasets()?) } else { None };
    let resolve = |source: &DataSource| -> Result<LabeledDataset, CliError> {
        match (source, &real) {
            (DataSource::Train, Some((train, _))) => Ok(train.clone()),
            (DataSource::Test, Some((_, test))) => Ok(test.clone()),
            (DataSource::Synthetic(p), _) => synthetic_dataset(&load_synthetic(p, None)?.set),
            _ => unreachable!("real splits are loaded whenever a side needs them"),
        }
    };
    let (data_a, data_b) = (resolve(&job.data_a)?, resolve(&job.data_b)?);
    let net_a = load_checkpoint(&job.net_a)?;
    let net_b = load_checkpoint(&job.net_b)?;
    let heatmap = cka_heatmap(&net_a, &data_a, &net_b, &data_b, job.samples, job.seed, workers)?;
    create_dir(out)?;
    save_heatmap_csv(&heatmap, &out.join("heatmap.csv"))?;
    if job.svg {
        save_heatmap_svg(&heatmap, &out.join("heatmap.svg"))?;
    }
    let meta = HeatmapMeta {
        net_a: job.net_a.display().to_string(),
        data_a: job.data_a.to_string(),
        net_b: job.net_b.display().to_string(),
        data_b: job.data_b.to_string(),
        heatmap: &heatmap,
    };
    write_json(&out.join("heatmap.json"), &meta)?;
    Ok(heatmap)
}

/// Runs the self-check suite and returns the rendered report, or the
/// report together with a failure when any check fails.
pub fn mi_check(inject_fault: bool) -> (String, Result<(), CliError>) {
    let results = run_self_checks(inject_fault);
    let failed = results.iter().filter(|r| !r.passed).count();
    let report = render_report(&results);
    if failed == 0 {
        (report, Ok(()))
    } else {
        (report, Err(CliError::SelfCheck { failed }))
    }
}

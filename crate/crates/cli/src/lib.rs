//! Command-line driver: distillation runs, evaluation of stored synthetic
//! sets, λ/β sweeps, CKA heatmaps and the MI self-check suite.
//!
//! Exit codes are stable: 0 on success, 1 for configuration or user errors,
//! 2 when a run diverges and 3 when a self-check fails.

pub mod commands;
pub mod config;
mod error;
pub mod selfcheck;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use error::CliError;

use commands::{CkaJob, DataSource, CONFIG_FILE, REAL_NET_FILE, SYNTHETIC_FILE, SYN_NET_FILE};
use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "midistill", version, about = "Dataset distillation with contrastive MI maximization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON config file; defaults apply to every key it leaves out.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set lambda=0` or `--set dataset.spread=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Threads for evaluation networks and heatmap rows.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

impl ConfigArgs {
    fn resolve(&self, fallback: Option<&Path>) -> Result<RunConfig, CliError> {
        let path = self.config.as_deref().or(fallback.filter(|p| p.exists()));
        RunConfig::load(path, &self.sets)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Distill a synthetic set, evaluate it and write a run directory.
    Distill {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a stored synthetic set on the configured test split.
    Eval {
        #[arg(long)]
        synthetic: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Defaults to the directory holding the synthetic set.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid of runs over λ and/or β values and seeds.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',')]
        lambdas: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        betas: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Layer-by-layer CKA heatmap between two networks.
    Cka {
        /// Run directory: compares its real-trained net on the train split
        /// with its synthetic-trained net on the synthetic set.
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long)]
        net_a: Option<PathBuf>,
        /// `train`, `test` or a synthetic set path.
        #[arg(long)]
        data_a: Option<DataSource>,
        #[arg(long)]
        net_b: Option<PathBuf>,
        #[arg(long)]
        data_b: Option<DataSource>,
        #[arg(long, default_value_t = 512)]
        samples: usize,
        /// Sampling seed; defaults to the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        no_svg: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Defaults to the run directory, or the current directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the MI self-check suite.
    MiCheck {
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn required(value: Option<PathBuf>, fallback: Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    value
        .or(fallback)
        .ok_or_else(|| CliError::Usage(format!("{flag} is required without --run")))
}

/// Executes a parsed command, printing results to stdout.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Distill { cfg, out } => {
            let config = cfg.resolve(None)?;
            let s = commands::distill(&config, &out, cfg.workers)?;
            println!("real-net train accuracy {:.4}", s.real_train_accuracy);
            println!("final total loss {:.6}", s.final_total);
            println!(
                "eval accuracy {:.4} ± {:.4} over {} networks",
                s.eval.mean,
                s.eval.std,
                s.eval.accuracies.len()
            );
            println!("run directory {}", s.out.display());
        }
        Command::Eval { synthetic, cfg, out } => {
            let dir = synthetic.parent().map(Path::to_path_buf).unwrap_or_default();
            let config = cfg.resolve(Some(&dir.join(CONFIG_FILE)))?;
            let out = out.unwrap_or(dir);
            let r = commands::eval(&config, &synthetic, &out, cfg.workers)?;
            println!("eval accuracy {:.4} ± {:.4} over {} networks", r.mean, r.std, r.accuracies.len());
        }
        Command::Sweep {
            cfg,
            lambdas,
            betas,
            seeds,
            out,
        } => {
            let config = cfg.resolve(None)?;
            let (_, summary) = commands::sweep(&config, &lambdas, &betas, &seeds, &out, cfg.workers)?;
            println!("{:>8} {:>8} {:>5} {:>7} {:>8} {:>8}", "lambda", "beta", "runs", "failed", "mean", "std");
            for r in summary {
                let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
                println!(
                    "{:>8} {:>8} {:>5} {:>7} {:>8} {:>8}",
                    r.lambda,
                    r.beta,
                    r.runs,
                    r.failed,
                    fmt(r.mean),
                    fmt(r.std)
                );
            }
        }
        Command::Cka {
            run,
            net_a,
            data_a,
            net_b,
            data_b,
            samples,
            seed,
            no_svg,
            cfg,
            out,
        } => {
            let config = cfg.resolve(run.as_ref().map(|r| r.join(CONFIG_FILE)).as_deref())?;
            let job = CkaJob {
                net_a: required(net_a, run.as_ref().map(|r| r.join(REAL_NET_FILE)), "--net-a")?,
                data_a: data_a.or(run.as_ref().map(|_| DataSource::Train)).ok_or_else(|| CliError::Usage("--data-a is required without --run".into()))?,
                net_b: required(net_b, run.as_ref().map(|r| r.join(SYN_NET_FILE)), "--net-b")?,
                data_b: data_b
                    .or(run.as_ref().map(|r| DataSource::Synthetic(r.join(SYNTHETIC_FILE))))
                    .ok_or_else(|| CliError::Usage("--data-b is required without --run".into()))?,
                samples,
                seed: seed.unwrap_or(config.distill.seed),
                svg: !no_svg,
            };
            let out = out.or(run).unwrap_or_else(|| PathBuf::from("."));
            let h = commands::cka(&config, &job, &out, cfg.workers)?;
            print!("{:>8}", "");
            for c in &h.col_labels {
                print!(" {c:>8}");
            }
            println!();
            for (label, row) in h.row_labels.iter().zip(&h.values) {
                print!("{label:>8}");
                for v in row {
                    match v.value() {
                        Some(v) => print!(" {v:>8.4}"),
                        None => print!(" {:>8}", "degen."),
                    }
                }
                println!();
            }
            println!("m = {}, heatmap written to {}", h.samples, out.display());
        }
        Command::MiCheck { inject_fault } => {
            let (report, result) = commands::mi_check(inject_fault);
            print!("{report}");
            result?;
        }
    }
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

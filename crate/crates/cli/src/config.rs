//! Run configuration: the distillation knobs plus a dataset source, read from
//! flat JSON text and adjusted by `--set key=value` overrides.

use std::path::{Path, PathBuf};

use midistill_core::data::{gen_gaussian_mixture, load_csv, load_idx_with, IdxOptions, LabeledDataset};
use midistill_core::distill::DistillConfig;
use midistill_core::seed::derive_seed;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

/// Environment variable that replaces the master seed of every run.
pub const SEED_ENV: &str = "MIDISTILL_SEED";

fn default_classes() -> usize {
    4
}
fn default_per_class() -> usize {
    200
}
fn default_dim() -> usize {
    2
}
fn default_spread() -> f64 {
    0.25
}
fn default_test_per_class() -> usize {
    250
}

/// Where the real train and test splits come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Gaussian blobs; both splits are drawn from seeds derived from the
    /// master seed.
    Mixture {
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_per_class")]
        per_class: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_spread")]
        spread: f64,
        #[serde(default = "default_test_per_class")]
        test_per_class: usize,
    },
    /// MNIST-style IDX files. The test split is normalized with the train
    /// split's statistics.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default)]
        downsample: Option<usize>,
        #[serde(default)]
        limit: Option<usize>,
    },
    /// CSV files with the label in the last column.
    Csv { train: PathBuf, test: PathBuf },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Mixture {
            classes: default_classes(),
            per_class: default_per_class(),
            dim: default_dim(),
            spread: default_spread(),
            test_per_class: default_test_per_class(),
        }
    }
}

impl DatasetSpec {
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            DatasetSpec::Mixture { .. } => {}
            DatasetSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } => {
                for p in [train_images, train_labels, test_images, test_labels] {
                    fix(p);
                }
            }
            DatasetSpec::Csv { train, test } => {
                fix(train);
                fix(test);
            }
        }
    }

    /// Loads `(train, test)`.
    pub fn load(&self, seed: u64) -> Result<(LabeledDataset, LabeledDataset), CliError> {
        match self {
            DatasetSpec::Mixture {
                classes,
                per_class,
                dim,
                spread,
                test_per_class,
            } => Ok((
                gen_gaussian_mixture(*classes, *per_class, *dim, *spread, derive_seed(seed, "data", 0))?,
                gen_gaussian_mixture(*classes, *test_per_class, *dim, *spread, derive_seed(seed, "data", 1))?,
            )),
            DatasetSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                downsample,
                limit,
            } => {
                let opts = IdxOptions {
                    downsample: *downsample,
                    limit: *limit,
                    stats: None,
                };
                let train = load_idx_with(train_images, train_labels, &opts)?;
                let opts = IdxOptions {
                    stats: Some((train.meta().mean.clone(), train.meta().std.clone())),
                    ..opts
                };
                let test = load_idx_with(test_images, test_labels, &opts)?;
                Ok((train, test))
            }
            DatasetSpec::Csv { train, test } => Ok((load_csv(train)?, load_csv(test)?)),
        }
    }
}

/// A fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub distill: DistillConfig,
    pub dataset: DatasetSpec,
}

/// Parses `key=value`; the value is read as JSON when it parses, and as a
/// plain string otherwise.
pub fn parse_override(text: &str) -> Result<(Vec<String>, Value), CliError> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {text:?} is not of the form key=value")))?;
    let path: Vec<String> = key.split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(CliError::Usage(format!("override key {key:?} has an empty segment")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((path, value))
}

fn apply_override(root: &mut Map<String, Value>, path: &[String], value: Value) -> Result<(), CliError> {
    let (last, parents) = path.split_last().expect("override paths are nonempty");
    let mut node = root;
    for (depth, key) in parents.iter().enumerate() {
        node = match node.entry(key.clone()).or_insert_with(|| Value::Object(Map::new())) {
            Value::Object(m) => m,
            _ => {
                return Err(CliError::Config(format!(
                    "cannot set {}: {} is not an object",
                    path.join("."),
                    parents[..=depth].join(".")
                )))
            }
        };
    }
    node.insert(last.clone(), value);
    Ok(())
}

impl RunConfig {
    /// Builds the configuration from optional JSON text, overrides and the
    /// seed environment variable, in that order of precedence.
    ///
    /// Relative dataset paths are taken relative to `base`.
    pub fn resolve(text: Option<&str>, overrides: &[String], base: &Path, env_seed: Option<&str>) -> Result<Self, CliError> {
        let mut root = match text {
            Some(t) => match serde_json::from_str::<Value>(t).map_err(|e| CliError::Config(format!("config is not valid JSON: {e}")))? {
                Value::Object(m) => m,
                _ => return Err(CliError::Config("config must be a JSON object".into())),
            },
            None => Map::new(),
        };
        if !root.contains_key("dataset") {
            let default = serde_json::to_value(DatasetSpec::default()).expect("dataset serializes");
            root.insert("dataset".into(), default);
        }
        for o in overrides {
            let (path, value) = parse_override(o)?;
            apply_override(&mut root, &path, value)?;
        }
        if let Some(s) = env_seed {
            let seed: u64 = s
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV}={s:?} is not an unsigned integer")))?;
            root.insert("seed".into(), Value::from(seed));
        }
        let mut dataset = match root.remove("dataset") {
            Some(v) => serde_json::from_value(v).map_err(|e| CliError::Config(format!("dataset: {e}")))?,
            None => DatasetSpec::default(),
        };
        dataset.resolve_paths(base);
        let distill: DistillConfig =
            serde_json::from_value(Value::Object(root)).map_err(|e| CliError::Config(e.to_string()))?;
        distill.validate().map_err(|e| match e {
            midistill_core::Error::Config(m) => CliError::Config(m),
            other => other.into(),
        })?;
        Ok(Self { distill, dataset })
    }

    /// Reads `path` (when given) and resolves it with the overrides and the
    /// process environment.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let env_seed = std::env::var(SEED_ENV).ok();
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                Self::resolve(Some(&text), overrides, &base, env_seed.as_deref())
            }
            None => {
                let cwd = std::env::current_dir().unwrap_or_default();
                Self::resolve(None, overrides, &cwd, env_seed.as_deref())
            }
        }
    }

    /// The flat JSON object written to `config.json`.
    pub fn to_value(&self) -> Value {
        let mut v = serde_json::to_value(&self.distill).expect("config serializes");
        v.as_object_mut()
            .expect("config is an object")
            .insert("dataset".into(), serde_json::to_value(&self.dataset).expect("dataset serializes"));
        v
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("config serializes") + "\n"
    }

    pub fn load_datasets(&self) -> Result<(LabeledDataset, LabeledDataset), CliError> {
        self.dataset.load(self.distill.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(text: Option<&str>, overrides: &[&str]) -> Result<RunConfig, CliError> {
        let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        RunConfig::resolve(text, &o, Path::new("/base"), None)
    }

    #[test]
    fn defaults_and_overrides() {
        let c = resolve(None, &[]).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.distill.lambda, 0.8);
        let c = resolve(
            Some(r#"{"lambda": 0.5, "dataset": {"kind": "mixture", "spread": 0.3}}"#),
            &["lambda=0", "milestones=[100,200]", "iterations=300", "dataset.classes=3"],
        )
        .unwrap();
        assert_eq!(c.distill.lambda, 0.0);
        assert_eq!(c.distill.milestones, vec![100, 200]);
        match c.dataset {
            DatasetSpec::Mixture { classes, spread, .. } => assert_eq!((classes, spread), (3, 0.3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(resolve(Some(r#"{"lamda": 1}"#), &[]), Err(CliError::Config(_))));
        assert!(matches!(resolve(None, &["dataset.spred=1"]), Err(CliError::Config(_))));
        assert!(matches!(resolve(None, &["lambda"]), Err(CliError::Usage(_))));
        assert!(matches!(resolve(None, &["lambda=-1"]), Err(CliError::Config(_))));
        assert!(matches!(resolve(None, &["lambda.x=1"]), Err(CliError::Config(_))));
    }

    #[test]
    fn written_config_round_trips() {
        let c = resolve(
            Some(r#"{"dataset": {"kind": "csv", "train": "a.csv", "test": "/abs/b.csv"}}"#),
            &["seed=9"],
        )
        .unwrap();
        assert_eq!(
            c.dataset,
            DatasetSpec::Csv {
                train: PathBuf::from("/base/a.csv"),
                test: PathBuf::from("/abs/b.csv")
            }
        );
        let again = RunConfig::resolve(Some(&c.to_json()), &[], Path::new("/elsewhere"), None).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn environment_seed_wins() {
        let c = RunConfig::resolve(Some(r#"{"seed": 1}"#), &["seed=2".into()], Path::new("."), Some("7")).unwrap();
        assert_eq!(c.distill.seed, 7);
        assert!(RunConfig::resolve(None, &[], Path::new("."), Some("x")).is_err());
    }
}

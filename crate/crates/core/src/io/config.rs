//! Experiment specification files (TOML).
//!
//! ```toml
//! experiment_id = "lenet-l1"
//! output_dir = "runs/lenet-l1"
//! seeds = [0, 1, 2]
//!
//! [dataset.idx]
//! dir = "data/mnist"
//!
//! [lottery]
//! arch = [784, 300, 100, 10]
//! strategy = "l1"
//! mode = "iterative"
//! per_round_fraction = 0.2
//! rounds = 10
//!
//! [lottery.train]
//! epochs = 10
//! learning_rate = 0.1
//! batch_size = 128
//! ```
//!
//! Unknown keys anywhere are errors. Relative paths resolve against the
//! directory holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::io::idx::{load_idx, load_mnist_dir};
use crate::io::synthetic::gen_synthetic;
use crate::lottery::LotteryConfig;
use crate::nn::Dataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub experiment_id: String,
    pub output_dir: PathBuf,
    /// One job per seed; each job uses the seed for initialization, data
    /// subset, strategy and both training schedules. Empty means a single
    /// job with the seeds written in `lottery`.
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub dataset: DatasetSource,
    pub lottery: LotteryConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Idx(IdxSource),
    Synthetic(SyntheticSource),
}

/// Either `dir` holding the four standard MNIST files, or all four paths.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSource {
    pub dir: Option<PathBuf>,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Keep only the first rows of each split.
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    #[serde(default)]
    pub seed: u64,
}

pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: Self =
            toml::from_str(text).map_err(|e| Error::Format(format!("experiment spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Reads and validates a spec, resolving relative paths against its
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        spec.resolve_paths(base);
        Ok(spec)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let DatasetSource::Idx(src) = &mut self.dataset {
            for p in [
                &mut src.dir,
                &mut src.train_images,
                &mut src.train_labels,
                &mut src.test_images,
                &mut src.test_labels,
            ]
            .into_iter()
            .flatten()
            {
                fix(p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment_id.is_empty()
            || !self
                .experiment_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return Err(usage!(
                "experiment_id must be non-empty and use only letters, digits, '-', '_' or '.'"
            ));
        }
        self.lottery.validate()?;
        match &self.dataset {
            DatasetSource::Idx(src) => {
                let explicit = [
                    &src.train_images,
                    &src.train_labels,
                    &src.test_images,
                    &src.test_labels,
                ];
                let n = explicit.iter().filter(|p| p.is_some()).count();
                if !((src.dir.is_some() && n == 0) || (src.dir.is_none() && n == 4)) {
                    return Err(usage!(
                        "dataset.idx needs either `dir` or all four file paths"
                    ));
                }
            }
            DatasetSource::Synthetic(s) => {
                if s.classes < 2 || s.dim == 0 || s.per_class == 0 || s.test_per_class == 0 {
                    return Err(usage!("dataset.synthetic sizes must be positive with ≥ 2 classes"));
                }
            }
        }
        Ok(())
    }

    /// `(seed, config)` for every job.
    pub fn jobs(&self) -> Vec<(u64, LotteryConfig)> {
        if self.seeds.is_empty() {
            return vec![(self.lottery.init_seed, self.lottery.clone())];
        }
        self.seeds
            .iter()
            .map(|&s| {
                let mut cfg = self.lottery.clone();
                cfg.init_seed = s;
                cfg.data_seed = s;
                cfg.strategy_seed = s;
                cfg.train.seed = s;
                cfg.final_train.seed = s;
                (s, cfg)
            })
            .collect()
    }

    pub fn load_data(&self) -> Result<Splits> {
        match &self.dataset {
            DatasetSource::Idx(src) => {
                let (train, test) = match &src.dir {
                    Some(dir) => load_mnist_dir(dir)?,
                    None => (
                        load_idx(
                            src.train_images.as_ref().unwrap(),
                            src.train_labels.as_ref().unwrap(),
                        )?,
                        load_idx(
                            src.test_images.as_ref().unwrap(),
                            src.test_labels.as_ref().unwrap(),
                        )?,
                    ),
                };
                let limit = |d: Dataset, n: Option<usize>| match n {
                    Some(n) if n < d.len() => d.rows(0..n),
                    _ => d,
                };
                Ok(Splits {
                    train: limit(train, src.train_limit),
                    test: limit(test, src.test_limit),
                })
            }
            DatasetSource::Synthetic(s) => Ok(Splits {
                train: gen_synthetic(s.classes, s.dim, s.per_class, s.seed)?,
                test: gen_synthetic(s.classes, s.dim, s.test_per_class, s.seed.wrapping_add(1))?,
            }),
        }
    }

    pub fn job_stem(&self, seed: u64) -> String {
        format!("{}_seed{seed}", self.experiment_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = r#"
experiment_id = "toy"
output_dir = "out"
seeds = [4, 5]

[dataset.synthetic]
classes = 3
dim = 4
per_class = 20
test_per_class = 10

[lottery]
arch = [4, 8, 3]
strategy = "fisher"
mode = "iterative"
per_round_fraction = 0.2
rounds = 2

[lottery.fisher]
sample_count = 30
batch_size = 10

[lottery.train]
epochs = 2
"#;

    #[test]
    fn parses_and_expands_seeds() {
        let spec = ExperimentSpec::parse(SPEC).unwrap();
        let jobs = spec.jobs();
        assert_eq!(jobs.len(), 2);
        assert_eq!(jobs[1].1.init_seed, 5);
        assert_eq!(jobs[1].1.train.seed, 5);
        assert_eq!(jobs[0].1.train.epochs, 2);
        assert_eq!(jobs[0].1.train.train_batch_size, 128);
        let splits = spec.load_data().unwrap();
        assert_eq!((splits.train.len(), splits.test.len()), (60, 30));
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = SPEC.replace("rounds = 2", "rounds = 2\nround = 3");
        assert!(matches!(ExperimentSpec::parse(&bad), Err(Error::Format(_))));
        let bad = SPEC.replace("epochs = 2", "epoch = 2");
        assert!(ExperimentSpec::parse(&bad).is_err());
        let bad = SPEC.replace("test_per_class = 10", "test_per_class = 10\nnoise = 1.0");
        assert!(ExperimentSpec::parse(&bad).is_err());
    }

    #[test]
    fn invalid_values_rejected_before_compute() {
        let bad = SPEC.replace("per_round_fraction = 0.2", "per_round_fraction = 1.2");
        assert!(matches!(ExperimentSpec::parse(&bad), Err(Error::Usage(_))));
        let bad = SPEC.replace("strategy = \"fisher\"", "strategy = \"magnitude\"");
        assert!(ExperimentSpec::parse(&bad).is_err());
    }
}

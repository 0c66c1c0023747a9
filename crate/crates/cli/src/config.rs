//! Experiment configuration: defaults, an optional JSON file, then flags.

use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use twoscale::data::{resolve_data_dir, BlobConfig, DATA_DIR_ENV};
use twoscale::losses::{LossKind, LossVariant};
use twoscale::nn::NetworkSpec;
use twoscale::training::{Horizon, TrainingConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mnist,
    Cifar10,
    Cifar100,
    Synthetic,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar10 => "cifar10",
            DatasetKind::Cifar100 => "cifar100",
            DatasetKind::Synthetic => "synthetic",
        }
    }

    fn default_hidden(self) -> usize {
        match self {
            DatasetKind::Mnist => 128,
            DatasetKind::Cifar10 | DatasetKind::Cifar100 => 120,
            DatasetKind::Synthetic => 32,
        }
    }
}

/// Everything a run matrix needs. Serialized form is the `--config` file
/// format; missing fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    /// Root holding the dataset files; required for the real datasets.
    pub data_dir: Option<PathBuf>,
    pub variants: Vec<LossKind>,
    pub etas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub horizon: Horizon,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub scale_multiplier: f64,
    pub eval_every: usize,
    /// Hidden width of the preset architecture; the dataset's default if unset.
    pub hidden: Option<usize>,
    /// Cap of the truncated loss.
    pub trunc_k: f64,
    pub synthetic: BlobConfig,
    /// Not serialized, so runs written to different directories compare equal.
    #[serde(skip_serializing)]
    pub out: PathBuf,
    /// Cells run concurrently; does not affect results.
    #[serde(skip_serializing)]
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainingConfig::default();
        Self {
            dataset: DatasetKind::Mnist,
            data_dir: None,
            variants: vec![LossKind::TwoScale, LossKind::SingleScale],
            etas: vec![t.variant.eta],
            seeds: vec![0],
            horizon: t.horizon,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            scale_multiplier: t.scale_multiplier,
            eval_every: t.eval_every,
            hidden: None,
            trunc_k: 0.1,
            synthetic: BlobConfig {
                classes: 4,
                per_class: 250,
                dim: 8,
                spread: 0.5,
                seed: 0,
            },
            out: PathBuf::from("runs"),
            jobs: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if self.variants.is_empty() || self.etas.is_empty() || self.seeds.is_empty() {
            return usage("variant, eta and seed lists must be nonempty".into());
        }
        if self.jobs == 0 {
            return usage("--jobs must be at least 1".into());
        }
        for cell in self.cells() {
            cell.training(self)
                .validate()
                .map_err(|e| CliError::Usage(e.to_string()))?;
        }
        if self.dataset != DatasetKind::Synthetic && self.data_dir.is_none() {
            return usage(format!(
                "dataset {} needs --data-dir or {DATA_DIR_ENV}",
                self.dataset.name()
            ));
        }
        Ok(())
    }

    pub fn hidden(&self) -> usize {
        self.hidden.unwrap_or(self.dataset.default_hidden())
    }

    /// Preset network for the dataset.
    pub fn network(&self, classes: usize) -> NetworkSpec {
        match self.dataset {
            DatasetKind::Mnist => NetworkSpec::two_layer_dense(784, self.hidden(), classes),
            DatasetKind::Cifar10 | DatasetKind::Cifar100 => NetworkSpec::lenet([3, 32, 32], classes, self.hidden()),
            DatasetKind::Synthetic => NetworkSpec::two_layer_dense(self.synthetic.dim, self.hidden(), classes),
        }
    }

    /// Every (variant, η, seed) combination in flag order. Variants whose
    /// value does not depend on η get one cell per seed.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &kind in &self.variants {
            let etas: Vec<Option<f64>> = if kind.is_two_scale() {
                self.etas.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            for eta in etas {
                for &seed in &self.seeds {
                    out.push(Cell { kind, eta, seed });
                }
            }
        }
        out.dedup();
        out
    }
}

/// One training run of the matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub kind: LossKind,
    pub eta: Option<f64>,
    pub seed: u64,
}

impl Cell {
    /// `(variant, η)` part of the key, shared by all seeds.
    pub fn group(&self) -> String {
        match self.eta {
            Some(eta) => format!("{}_eta{eta}", self.kind),
            None => self.kind.to_string(),
        }
    }

    pub fn key(&self, dataset: DatasetKind) -> String {
        format!("{}_{}_seed{}", dataset.name(), self.group(), self.seed)
    }

    pub fn training(&self, cfg: &ExperimentConfig) -> TrainingConfig {
        let variant = match self.kind {
            LossKind::Truncated => LossVariant::truncated(cfg.trunc_k),
            kind => LossVariant::new(kind, self.eta.unwrap_or(TrainingConfig::default().variant.eta)),
        };
        TrainingConfig {
            learning_rate: cfg.learning_rate,
            batch_size: cfg.batch_size,
            horizon: cfg.horizon,
            variant,
            scale_multiplier: cfg.scale_multiplier,
            seed: self.seed,
            eval_every: cfg.eval_every,
            ..TrainingConfig::default()
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "twoscale",
    version,
    about = "Train and compare two-scale classification losses"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)] // parsed once
pub enum Command {
    /// Run every (variant, eta, seed) cell and write logs, reports and a summary.
    Run(RunArgs),
    /// Tabulate metric differences between final reports (first one is the baseline).
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON file with any subset of the configuration; flags override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetKind>,
    /// Directory holding the dataset files.
    #[arg(long, value_name = "DIR", env = DATA_DIR_ENV)]
    pub data_dir: Option<PathBuf>,
    /// Loss variant; repeat for several [possible: vanilla-ce, single-scale,
    /// two-scale, fixed-two-scale, separation, truncated].
    #[arg(long = "variant", value_name = "NAME", action = ArgAction::Append)]
    pub variants: Vec<LossKind>,
    /// Branch threshold; repeat for several.
    #[arg(long = "eta", value_name = "ETA", action = ArgAction::Append)]
    pub etas: Vec<f64>,
    /// Seeds as a list (`0,1,2`) or half-open range (`0..10`).
    #[arg(long, value_name = "SEEDS", value_parser = parse_seeds)]
    pub seeds: Option<SeedList>,
    /// SGD steps per run.
    #[arg(long, conflicts_with = "epochs")]
    pub iterations: Option<usize>,
    /// Passes over the training set per run.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Hidden width of the preset architecture.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Test-set evaluation period in steps (0 disables).
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Initial ratio of the high scale to the low one.
    #[arg(long)]
    pub scale_mult: Option<f64>,
    /// Cap of the truncated loss.
    #[arg(long)]
    pub trunc_k: Option<f64>,
    /// Cells to run concurrently.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Cell report files (`*.json` written by `run`), baseline first.
    #[arg(required = true, num_args = 2.., value_name = "REPORT")]
    pub reports: Vec<PathBuf>,
    /// Write the CSV here instead of standard output.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

/// Parsed `--seeds` value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("bad range start: {e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("bad range end: {e}"))?;
        (a..b).collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse().map_err(|e| format!("bad seed {t:?}: {e}")))
            .collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err("empty seed list".into());
    }
    Ok(SeedList(seeds))
}

fn read_config_file(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

/// Defaults, overlaid with the config file, overlaid with flags.
pub fn parse_config(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => read_config_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = args.dataset {
        cfg.dataset = d;
    }
    if let Some(d) = &args.data_dir {
        cfg.data_dir = Some(d.clone());
    }
    cfg.data_dir = resolve_data_dir(cfg.data_dir.as_deref());
    if !args.variants.is_empty() {
        cfg.variants = args.variants.clone();
    }
    if !args.etas.is_empty() {
        cfg.etas = args.etas.clone();
    }
    if let Some(s) = &args.seeds {
        cfg.seeds = s.0.clone();
    }
    match (args.iterations, args.epochs) {
        (Some(n), _) => cfg.horizon = Horizon::Iterations(n),
        (None, Some(e)) => cfg.horizon = Horizon::Epochs(e),
        (None, None) => {}
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.lr {
        cfg.learning_rate = v;
    }
    if args.hidden.is_some() {
        cfg.hidden = args.hidden;
    }
    if let Some(v) = &args.out {
        cfg.out = v.clone();
    }
    if let Some(v) = args.eval_every {
        cfg.eval_every = v;
    }
    if let Some(v) = args.scale_mult {
        cfg.scale_multiplier = v;
    }
    if let Some(v) = args.trunc_k {
        cfg.trunc_k = v;
    }
    if let Some(v) = args.jobs {
        cfg.jobs = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

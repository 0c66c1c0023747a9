//! Running a configured matrix and writing its outputs.
//!
//! For every cell `<key>` the output directory gets `<key>.csv` (one row per
//! step, with the test accuracy filled in where it was sampled) and
//! `<key>.json` (the cell's configuration and final reports). `summary.json`
//! aggregates the final metrics across seeds for each (variant, η) group.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use twoscale::data::{load_cifar100_dir, load_cifar10_dir, load_mnist_dir, synthetic_blobs, Dataset, Split};
use twoscale::evaluation::MetricReport;
use twoscale::losses::{LossKind, ScaleState};
use twoscale::nn::NetworkSpec;
use twoscale::training::{run_experiment, EvalPoint, StepRecord, TrainingConfig};

use crate::compare::flatten_report;
use crate::config::{Cell, DatasetKind, ExperimentConfig};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Completed,
    Failed,
}

/// Contents of `<key>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub key: String,
    pub dataset: DatasetKind,
    pub variant: LossKind,
    pub eta: Option<f64>,
    pub seed: u64,
    pub network: NetworkSpec,
    pub training: TrainingConfig,
    pub status: CellStatus,
    pub error: Option<String>,
    pub steps_completed: usize,
    pub evaluations: Vec<EvalPoint>,
    pub final_test: Option<MetricReport>,
    pub final_train: Option<MetricReport>,
    pub final_scales: Option<ScaleState>,
    pub final_param_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub name: String,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub variant: LossKind,
    pub eta: Option<f64>,
    pub seeds: Vec<u64>,
    pub completed: usize,
    pub failures: Vec<SeedFailure>,
    /// Statistics over the completed seeds.
    pub metrics: Vec<Stat>,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSummary {
    pub config: ExperimentConfig,
    pub cells: Vec<String>,
    pub groups: Vec<GroupSummary>,
}

impl MatrixSummary {
    pub fn failed_cells(&self) -> usize {
        self.groups.iter().map(|g| g.failures.len()).sum()
    }
}

/// Train and test splits for the configured dataset.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset), CliError> {
    let root = || {
        cfg.data_dir
            .as_deref()
            .ok_or_else(|| CliError::Usage(format!("dataset {} needs a data directory", cfg.dataset.name())))
    };
    Ok(match cfg.dataset {
        DatasetKind::Mnist => (
            load_mnist_dir(root()?, Split::Train, true)?,
            load_mnist_dir(root()?, Split::Test, true)?,
        ),
        DatasetKind::Cifar10 => (
            load_cifar10_dir(root()?, Split::Train)?,
            load_cifar10_dir(root()?, Split::Test)?,
        ),
        DatasetKind::Cifar100 => (
            load_cifar100_dir(root()?, Split::Train)?,
            load_cifar100_dir(root()?, Split::Test)?,
        ),
        DatasetKind::Synthetic => synthetic_blobs(&cfg.synthetic)?,
    })
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn write_log(path: &Path, steps: &[StepRecord], evals: &[EvalPoint]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "iteration",
        "batch_accuracy",
        "loss",
        "R1",
        "R2_or_Rs",
        "high_branch",
        "test_accuracy",
    ])?;
    let test_at = |it: usize| {
        evals
            .iter()
            .find(|e| e.iteration == it)
            .map(|e| fmt_f64(e.test_accuracy))
            .unwrap_or_default()
    };
    if evals.first().is_some_and(|e| e.iteration == 0) {
        w.write_record(["0", "", "", "", "", "", &test_at(0)])?;
    }
    for s in steps {
        w.write_record([
            s.iteration.to_string(),
            fmt_f64(s.batch_accuracy),
            fmt_f64(s.loss),
            fmt_f64(s.scale_low),
            fmt_f64(s.scale_high),
            s.high_branch.to_string(),
            test_at(s.iteration),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn run_cell(
    cfg: &ExperimentConfig,
    cell: &Cell,
    spec: &NetworkSpec,
    train: &Dataset,
    test: &Dataset,
) -> Result<CellReport, CliError> {
    let training = cell.training(cfg);
    let key = cell.key(cfg.dataset);
    let mut report = CellReport {
        key: key.clone(),
        dataset: cfg.dataset,
        variant: cell.kind,
        eta: cell.eta,
        seed: cell.seed,
        network: spec.clone(),
        training: training.clone(),
        status: CellStatus::Completed,
        error: None,
        steps_completed: 0,
        evaluations: Vec::new(),
        final_test: None,
        final_train: None,
        final_scales: None,
        final_param_scale: None,
    };
    let log_path = cfg.out.join(format!("{key}.csv"));
    match run_experiment(spec, &training, train, test) {
        Ok(log) => {
            write_log(&log_path, &log.steps, &log.evaluations)?;
            report.steps_completed = log.steps.len();
            report.evaluations = log.evaluations;
            report.final_test = Some(log.final_test);
            report.final_train = log.final_train;
            report.final_scales = Some(log.final_scales);
            report.final_param_scale = Some(log.final_param_scale);
        }
        Err(fail) => {
            write_log(&log_path, &fail.steps, &fail.evaluations)?;
            report.status = CellStatus::Failed;
            report.error = Some(fail.error.to_string());
            report.steps_completed = fail.steps.len();
            report.evaluations = fail.evaluations;
        }
    }
    write_json(&cfg.out.join(format!("{key}.json")), &report)?;
    Ok(report)
}

fn stats(name: String, values: &[f64]) -> Stat {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Stat {
        name,
        mean,
        std,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

fn cell_metrics(r: &CellReport) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    if let Some(t) = &r.final_test {
        out.extend(flatten_report(t).into_iter().map(|(k, v)| (format!("test.{k}"), v)));
    }
    if let Some(t) = &r.final_train {
        out.extend(flatten_report(t).into_iter().map(|(k, v)| (format!("train.{k}"), v)));
    }
    if let (Some(s), Some(p)) = (r.final_scales, r.final_param_scale) {
        out.push(("scale_low".into(), s.low));
        out.push(("scale_high".into(), s.high));
        out.push(("param_scale".into(), p));
    }
    out
}

fn summarize(cfg: &ExperimentConfig, cells: &[Cell], reports: &[CellReport]) -> MatrixSummary {
    let mut groups: Vec<GroupSummary> = Vec::new();
    for (cell, rep) in cells.iter().zip(reports) {
        let name = cell.group();
        let idx = match groups.iter().position(|g| g.group == name) {
            Some(i) => i,
            None => {
                groups.push(GroupSummary {
                    group: name,
                    variant: cell.kind,
                    eta: cell.eta,
                    seeds: Vec::new(),
                    completed: 0,
                    failures: Vec::new(),
                    metrics: Vec::new(),
                });
                groups.len() - 1
            }
        };
        let g = &mut groups[idx];
        g.seeds.push(cell.seed);
        match rep.status {
            CellStatus::Completed => g.completed += 1,
            CellStatus::Failed => g.failures.push(SeedFailure {
                seed: cell.seed,
                error: rep.error.clone().unwrap_or_default(),
            }),
        }
    }
    for g in &mut groups {
        let done: Vec<Vec<(String, f64)>> = cells
            .iter()
            .zip(reports)
            .filter(|(c, r)| c.group() == g.group && r.status == CellStatus::Completed)
            .map(|(_, r)| cell_metrics(r))
            .collect();
        if let Some(first) = done.first() {
            g.metrics = first
                .iter()
                .enumerate()
                .map(|(i, (name, _))| {
                    let vals: Vec<f64> = done.iter().map(|m| m[i].1).collect();
                    stats(name.clone(), &vals)
                })
                .collect();
        }
    }
    MatrixSummary {
        config: cfg.clone(),
        cells: reports.iter().map(|r| r.key.clone()).collect(),
        groups,
    }
}

/// Runs every cell of `cfg`, writing all outputs under `cfg.out`.
///
/// Cells that diverge are recorded as failed and do not stop the matrix;
/// I/O and data-loading errors do.
pub fn run_matrix(cfg: &ExperimentConfig) -> Result<MatrixSummary, CliError> {
    cfg.validate()?;
    let (train, test) = load_data(cfg)?;
    let spec = cfg.network(train.class_count());
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;

    let cells = cfg.cells();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<CellReport, CliError>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..cfg.jobs.min(cells.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cell) = cells.get(i) else { break };
                let r = run_cell(cfg, cell, &spec, &train, &test);
                match &r {
                    Ok(rep) => match (&rep.status, &rep.final_test) {
                        (CellStatus::Completed, Some(t)) => {
                            eprintln!("{}: test accuracy {:.4}", rep.key, t.accuracy)
                        }
                        _ => eprintln!("{}: failed: {}", rep.key, rep.error.as_deref().unwrap_or("")),
                    },
                    Err(e) => eprintln!("{}: {e}", cell.key(cfg.dataset)),
                }
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let reports = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every cell is visited"))
        .collect::<Result<Vec<_>, _>>()?;

    let summary = summarize(cfg, &cells, &reports);
    write_json(&cfg.out.join("summary.json"), &summary)?;
    Ok(summary)
}

//! Metric differences between final reports.

use std::io::Write;
use std::path::{Path, PathBuf};

use twoscale::evaluation::MetricReport;

use crate::CliError;

/// The comparable scalars of a report, in a fixed order: accuracy, then the
/// top-k grid, the close-enough grid, super-class accuracy if present, and the
/// confidence partition.
pub fn flatten_report(r: &MetricReport) -> Vec<(String, f64)> {
    let mut out = vec![("accuracy".to_string(), r.accuracy)];
    out.extend(r.top_k.iter().map(|t| (format!("top_{}", t.k), t.value)));
    out.extend(
        r.close_enough
            .iter()
            .map(|c| (format!("close_enough@{}", c.at), c.value)),
    );
    if let Some(s) = r.superclass_accuracy {
        out.push(("superclass_accuracy".into(), s));
    }
    out.push((format!("well_classified@{}", r.partition.mu), r.partition.well));
    out.push((format!("poorly_classified@{}", r.partition.mu), r.partition.poor));
    out.push((format!("marginal@{}", r.partition.mu), r.partition.marginal));
    out
}

/// Reads the final test report from a cell report written by `run`, or from
/// a bare metric report.
fn read_report(path: &Path) -> Result<MetricReport, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    match value.get("final_test") {
        Some(serde_json::Value::Null) => Err(CliError::Usage(format!(
            "{} has no final report (the run failed)",
            path.display()
        ))),
        Some(v) => Ok(serde_json::from_value(v.clone())?),
        None => Ok(serde_json::from_value(value)?),
    }
}

fn label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// CSV with one row per metric: the baseline value, then for every other
/// report its value and its difference from the baseline.
pub fn compare(labels: &[String], reports: &[MetricReport], out: impl Write) -> Result<(), CliError> {
    if reports.len() < 2 || labels.len() != reports.len() {
        return Err(CliError::Usage("compare needs at least two reports".into()));
    }
    let rows: Vec<Vec<(String, f64)>> = reports.iter().map(flatten_report).collect();
    let names: Vec<&String> = rows[0].iter().map(|(n, _)| n).collect();
    for (l, r) in labels.iter().zip(&rows).skip(1) {
        let other: Vec<&String> = r.iter().map(|(n, _)| n).collect();
        if other != names {
            return Err(CliError::Usage(format!(
                "metric grid of {l} differs from {}: [{}] vs [{}]",
                labels[0],
                other.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "),
                names.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            )));
        }
    }

    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["metric".to_string(), labels[0].clone()];
    for l in &labels[1..] {
        header.push(l.clone());
        header.push(format!("{l}-{}", labels[0]));
    }
    w.write_record(&header)?;
    for (i, name) in names.iter().enumerate() {
        let base = rows[0][i].1;
        let mut rec = vec![name.to_string(), base.to_string()];
        for r in &rows[1..] {
            rec.push(r[i].1.to_string());
            rec.push((r[i].1 - base).to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io("<output>", e))?;
    Ok(())
}

/// [`compare`] on report files, writing to `out` or standard output.
pub fn compare_files(paths: &[PathBuf], out: Option<&Path>) -> Result<(), CliError> {
    let reports = paths.iter().map(|p| read_report(p)).collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<String> = paths.iter().map(|p| label(p)).collect();
    match out {
        Some(p) => {
            let f = std::fs::File::create(p).map_err(|e| CliError::io(p, e))?;
            compare(&labels, &reports, f)
        }
        None => compare(&labels, &reports, std::io::stdout().lock()),
    }
}

//! Score reports and their rendered forms: range tables, box-plot data,
//! per-category breakdowns and the leaderboard.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetFamily;
use crate::manifest::RunManifest;
use crate::metrics::{AggregateReport, RobustnessReport};
use crate::scoring::ExtractionSummary;

/// Output of scoring one store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub manifest: RunManifest,
    pub extraction: ExtractionSummary,
    pub aggregate: AggregateReport,
}

impl ScoreReport {
    pub fn model(&self) -> &str {
        &self.manifest.model_name
    }

    pub fn family(&self) -> DatasetFamily {
        self.aggregate.family
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path).map_err(|e| ReportError::Io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| ReportError::Parse(path.display().to_string(), e))
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error("{0} is not a score report: {1}")]
    Parse(String, serde_json::Error),
    #[error("accuracy range out of order: mean {mean}, min {min}, max {max}")]
    RangeOrder { mean: f64, min: f64, max: f64 },
    #[error("reports are not comparable ({0}); pass --force to merge anyway")]
    Mixed(String),
    #[error("no reports given")]
    Empty,
}

/// `"77.0 [74.7, 77.9]  86.1"`: mean, range, then two spaces and the CR.
pub fn format_range_row(mean: f64, min: f64, max: f64, cr: f64) -> Result<String, ReportError> {
    if !(min <= mean && mean <= max) {
        return Err(ReportError::RangeOrder { mean, min, max });
    }
    Ok(format!("{mean:.1} [{min:.1}, {max:.1}]  {cr:.1}"))
}

fn report_row(r: &RobustnessReport, cr: f64) -> Result<String, ReportError> {
    format_range_row(r.mean_accuracy, r.min_accuracy, r.max_accuracy, cr)
}

/// Rows of `(label, report, cr)` for one score report: each task, then the
/// aggregate.
fn rows(report: &ScoreReport) -> Vec<(String, &RobustnessReport, f64)> {
    let mut out: Vec<(String, &RobustnessReport, f64)> =
        report.aggregate.tasks.iter().map(|t| (t.task.title().to_string(), &t.report, t.report.cr)).collect();
    out.push((format!("Aggregated ({})", report.aggregate.mode), &report.aggregate.overall, report.aggregate.cr));
    out
}

/// Plain-text table: one line per model, dataset and task.
pub fn render_table(reports: &[ScoreReport]) -> Result<String, ReportError> {
    let mut lines = Vec::new();
    for report in reports {
        for (label, r, cr) in rows(report) {
            lines.push((report.model().to_string(), report.family().to_string(), label, report_row(r, cr)?));
        }
    }
    let w0 = lines.iter().map(|l| l.0.len()).chain([5]).max().unwrap_or(5);
    let w1 = lines.iter().map(|l| l.1.len()).chain([7]).max().unwrap_or(7);
    let w2 = lines.iter().map(|l| l.2.len()).chain([4]).max().unwrap_or(4);
    let mut out = format!("{:<w0$}  {:<w1$}  {:<w2$}  Mean [Min, Max]  CR\n", "Model", "Dataset", "Task");
    for (model, family, task, row) in lines {
        let _ = writeln!(out, "{model:<w0$}  {family:<w1$}  {task:<w2$}  {row}");
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotPoint {
    pub model: String,
    pub family: DatasetFamily,
    pub task: String,
    pub variant: String,
    pub accuracy: f64,
}

/// Per-variant accuracies behind each range.
pub fn boxplot_points(reports: &[ScoreReport]) -> Vec<BoxplotPoint> {
    let mut out = Vec::new();
    for report in reports {
        for t in &report.aggregate.tasks {
            for (variant, accuracy) in &t.report.per_variant {
                out.push(BoxplotPoint {
                    model: report.model().to_string(),
                    family: report.family(),
                    task: t.task.as_str().to_string(),
                    variant: variant.clone(),
                    accuracy: *accuracy,
                });
            }
        }
    }
    out
}

/// Accuracy range and CR per category, for every task and the aggregate.
pub fn render_categories(reports: &[ScoreReport]) -> Result<String, ReportError> {
    let mut out = String::new();
    for report in reports {
        for (label, r, _) in rows(report) {
            let _ = writeln!(out, "{} / {} / {}", report.model(), report.family(), label);
            let width = r.per_category.keys().map(String::len).max().unwrap_or(0).max(8);
            let _ = writeln!(out, "  {:<width$}  {:>5}  Mean [Min, Max]  CR", "Category", "Items");
            for (name, c) in &r.per_category {
                let row = format_range_row(c.mean_accuracy, c.min_accuracy, c.max_accuracy, c.cr)?;
                let _ = writeln!(out, "  {name:<width$}  {:>5}  {row}", c.items);
            }
            out.push('\n');
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub rank: usize,
    pub model: String,
    pub family: DatasetFamily,
    pub cr: f64,
    pub mean_accuracy: f64,
    pub min_accuracy: f64,
    pub max_accuracy: f64,
    pub mode: String,
    pub predictions_per_item: usize,
}

/// Per dataset, ordered by aggregated CR, then mean accuracy, then model name.
pub fn leaderboard(reports: &[ScoreReport]) -> Vec<LeaderboardRow> {
    let mut rows: Vec<LeaderboardRow> = reports
        .iter()
        .map(|r| LeaderboardRow {
            rank: 0,
            model: r.model().to_string(),
            family: r.family(),
            cr: r.aggregate.cr,
            mean_accuracy: r.aggregate.overall.mean_accuracy,
            min_accuracy: r.aggregate.overall.min_accuracy,
            max_accuracy: r.aggregate.overall.max_accuracy,
            mode: r.aggregate.mode.to_string(),
            predictions_per_item: r.aggregate.overall.predictions_per_item,
        })
        .collect();
    rows.sort_by(|a, b| {
        a.family
            .cmp(&b.family)
            .then(b.cr.total_cmp(&a.cr))
            .then(b.mean_accuracy.total_cmp(&a.mean_accuracy))
            .then_with(|| a.model.cmp(&b.model))
    });
    let mut rank = 0;
    let mut family = None;
    for row in &mut rows {
        if family != Some(row.family) {
            family = Some(row.family);
            rank = 0;
        }
        rank += 1;
        row.rank = rank;
    }
    rows
}

/// Refuses to merge reports produced under different conditions.
pub fn check_comparable(reports: &[ScoreReport]) -> Result<(), ReportError> {
    for (i, a) in reports.iter().enumerate() {
        for b in &reports[i + 1..] {
            a.manifest.comparable(&b.manifest).map_err(ReportError::Mixed)?;
            if a.family() == b.family() && a.model() == b.model() {
                return Err(ReportError::Mixed(format!("two {} reports for model {}", a.family(), a.model())));
            }
            if a.family() == b.family() && a.aggregate.mode != b.aggregate.mode {
                return Err(ReportError::Mixed("different aggregation modes".into()));
            }
        }
    }
    Ok(())
}

fn jsonl<T: Serialize>(values: &[T]) -> String {
    values.iter().map(|v| serde_json::to_string(v).expect("serializes") + "\n").collect()
}

#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub table: PathBuf,
    pub boxplot: PathBuf,
    pub categories: PathBuf,
    pub leaderboard: PathBuf,
}

/// Writes `table.txt`, `boxplot.jsonl`, `categories.txt` and
/// `leaderboard.jsonl` into `dir`.
pub fn write_outputs(reports: &[ScoreReport], dir: &Path, force: bool) -> Result<ReportFiles, ReportError> {
    if reports.is_empty() {
        return Err(ReportError::Empty);
    }
    if let Err(e) = check_comparable(reports) {
        if !force {
            return Err(e);
        }
        log::warn!("{e}; merging because of --force");
    }
    let io = |p: &Path, e| ReportError::Io(p.display().to_string(), e);
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let files = ReportFiles {
        table: dir.join("table.txt"),
        boxplot: dir.join("boxplot.jsonl"),
        categories: dir.join("categories.txt"),
        leaderboard: dir.join("leaderboard.jsonl"),
    };
    let contents = [
        (&files.table, render_table(reports)?),
        (&files.boxplot, jsonl(&boxplot_points(reports))),
        (&files.categories, render_categories(reports)?),
        (&files.leaderboard, jsonl(&leaderboard(reports))),
    ];
    for (path, text) in contents {
        std::fs::write(path, text).map_err(|e| io(path, e))?;
    }
    Ok(files)
}

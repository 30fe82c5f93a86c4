use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::grid::{create_file, CellOutcome, CellResult, GridResult, ATTRIBUTIONS_DIR};
use super::svg::{bar_chart, beeswarm, line_chart, Series, SwarmRow};
use crate::cohort::{Task, Variant};
use crate::error::{Error, Result};
use crate::explain::{shap_summary, AttributionMethod, AttributionSet};
use crate::learners::ModelKind;
use crate::metrics::EvalReport;

pub const RESULTS_FILE: &str = "results.csv";
pub const SKIPPED_FILE: &str = "skipped.csv";
pub const BEST_FILE: &str = "best_models.csv";
pub const PLOTS_DIR: &str = "plots";

const MODEL_COLORS: [&str; 5] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"];

/// Files written by [`emit_report`], relative to the output directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportFiles {
    pub results: PathBuf,
    pub skipped: PathBuf,
    pub best_models: PathBuf,
    pub auc_plots: Vec<PathBuf>,
    pub summary_plots: Vec<PathBuf>,
}

fn beats(a: (&CellResult, &EvalReport), b: (&CellResult, &EvalReport)) -> bool {
    match a.1.auc.total_cmp(&b.1.auc) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => (a.0.model, a.0.spec.subset_size) < (b.0.model, b.0.spec.subset_size),
    }
}

/// Highest-AUC completed cell per (task, variant); ties go to the lower
/// model kind, then the smaller subset. Independent of row order.
pub fn best_models(grid: &GridResult) -> BTreeMap<(Task, Variant), &CellResult> {
    let mut best: BTreeMap<(Task, Variant), (&CellResult, &EvalReport)> = BTreeMap::new();
    for cand in grid.completed() {
        let key = (cand.0.spec.task, cand.0.spec.variant);
        match best.get(&key) {
            Some(&cur) if !beats(cand, cur) => {}
            _ => {
                best.insert(key, cand);
            }
        }
    }
    best.into_iter().map(|(k, (c, _))| (k, c)).collect()
}

fn sorted_cells(grid: &GridResult) -> Vec<&CellResult> {
    let mut cells: Vec<&CellResult> = grid.cells.iter().collect();
    cells.sort_by_key(|c| c.sort_key());
    cells
}

fn write_results(grid: &GridResult, path: &Path) -> Result<()> {
    create_file(path, |w| {
        writeln!(w, "task,subset,variant,model,{}", EvalReport::CSV_HEADER.join(","))?;
        for cell in sorted_cells(grid) {
            if let Some(report) = cell.report() {
                write!(w, "{},", cell.spec.task)?;
                report.write_csv_row(w, cell.spec.subset_size, cell.spec.variant.as_str(), cell.model.display_name())?;
            }
        }
        Ok(())
    })
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_skipped(grid: &GridResult, path: &Path) -> Result<()> {
    create_file(path, |w| {
        writeln!(w, "task,subset,variant,model,status,reason")?;
        for cell in sorted_cells(grid) {
            let (status, reason) = match &cell.outcome {
                CellOutcome::Done { .. } => continue,
                CellOutcome::Skipped { reason } => ("skipped", reason),
                CellOutcome::Failed { error } => ("failed", error),
            };
            writeln!(
                w,
                "{},{},{},{},{status},{}",
                cell.spec.task,
                cell.spec.subset_size,
                cell.spec.variant,
                cell.model.display_name(),
                csv_text(reason)
            )?;
        }
        Ok(())
    })
}

fn write_best(best: &BTreeMap<(Task, Variant), &CellResult>, path: &Path) -> Result<()> {
    create_file(path, |w| {
        writeln!(w, "task,variant,subset,model,{}", EvalReport::CSV_HEADER.join(","))?;
        for ((task, variant), cell) in best {
            let report = cell.report().expect("best cells are completed");
            writeln!(
                w,
                "{task},{variant},{},{},{}",
                cell.spec.subset_size,
                cell.model.display_name(),
                report.csv_fields().join(",")
            )?;
        }
        Ok(())
    })
}

fn auc_chart(grid: &GridResult, task: Task) -> String {
    let mut subsets: Vec<usize> = grid
        .cells
        .iter()
        .filter(|c| c.spec.task == task)
        .map(|c| c.spec.subset_size)
        .collect();
    subsets.sort_unstable();
    subsets.dedup();
    let categories: Vec<String> = subsets.iter().map(|n| format!("top {n}")).collect();

    let mut series = Vec::new();
    for kind in ModelKind::ALL {
        for variant in [Variant::Extended, Variant::Base] {
            let points: Vec<(usize, f64)> = subsets
                .iter()
                .enumerate()
                .filter_map(|(i, &n)| {
                    grid.completed()
                        .find(|(c, _)| c.spec.task == task && c.spec.variant == variant && c.spec.subset_size == n && c.model == kind)
                        .map(|(_, r)| (i, r.auc))
                })
                .collect();
            if points.is_empty() {
                continue;
            }
            series.push(Series {
                name: format!("{} ({})", kind.display_name(), variant),
                color: MODEL_COLORS[kind.index()].to_string(),
                dashed: variant == Variant::Base,
                points,
            });
        }
    }
    line_chart(
        &format!("AUC by lab subset: {}", task.title()),
        "laboratory test subset",
        "AUC",
        &categories,
        &series,
    )
}

pub fn load_attributions(output_dir: &Path, cell: &CellResult) -> Result<AttributionSet> {
    let path = output_dir.join(ATTRIBUTIONS_DIR).join(format!("{}.json", cell.file_stem()));
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Malformed {
        file: path.display().to_string(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

/// Beeswarm for instance-level sets, bars for global scores.
pub fn summary_chart(set: &AttributionSet, title: &str, top_k: usize) -> Result<String> {
    if set.method.is_local() {
        let rows = shap_summary(set, top_k)?;
        let swarm: Vec<SwarmRow> = rows
            .iter()
            .map(|row| {
                let j = set
                    .feature_names
                    .iter()
                    .position(|f| *f == row.feature)
                    .expect("summary features come from the set");
                let phi = set.values.column(j);
                let scaled: Vec<Option<f64>> = match &set.instances {
                    Some(x) => {
                        let col = x.column(j);
                        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        col.iter()
                            .map(|&v| Some(if hi > lo { (v - lo) / (hi - lo) } else { 0.5 }))
                            .collect()
                    }
                    None => vec![None; phi.len()],
                };
                SwarmRow {
                    feature: row.feature.clone(),
                    points: phi.iter().copied().zip(scaled).collect(),
                }
            })
            .collect();
        Ok(beeswarm(title, "SHAP value (impact on model output)", &swarm))
    } else {
        let scores = set.global_scores().unwrap_or_default();
        let mut bars: Vec<(String, f64)> = set.feature_names.iter().cloned().zip(scores).collect();
        bars.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        bars.truncate(top_k);
        let axis = match set.method {
            AttributionMethod::CoefMagnitude => "|coefficient| on standardized inputs",
            AttributionMethod::Permutation => "mean AUC drop when permuted",
            AttributionMethod::GiniImportance => "normalized impurity decrease",
            AttributionMethod::TreeShap => "attribution",
        };
        Ok(bar_chart(title, axis, &bars))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Results tables, best-model table, one AUC chart per task and one
/// attribution chart per best model.
pub fn emit_report(grid: &GridResult, output_dir: &Path, top_k: usize) -> Result<ReportFiles> {
    if grid.cells.is_empty() {
        return Err(Error::InvalidInput("no grid cells to report".into()));
    }
    let plots = output_dir.join(PLOTS_DIR);
    std::fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    let mut files = ReportFiles {
        results: PathBuf::from(RESULTS_FILE),
        skipped: PathBuf::from(SKIPPED_FILE),
        best_models: PathBuf::from(BEST_FILE),
        ..ReportFiles::default()
    };
    write_results(grid, &output_dir.join(&files.results))?;
    write_skipped(grid, &output_dir.join(&files.skipped))?;
    let best = best_models(grid);
    write_best(&best, &output_dir.join(&files.best_models))?;

    let mut tasks: Vec<Task> = grid.cells.iter().map(|c| c.spec.task).collect();
    tasks.sort();
    tasks.dedup();
    for task in tasks {
        let rel = PathBuf::from(PLOTS_DIR).join(format!("auc_{task}.svg"));
        write_text(&output_dir.join(&rel), &auc_chart(grid, task))?;
        files.auc_plots.push(rel);
    }

    for ((task, variant), cell) in &best {
        let set = load_attributions(output_dir, cell)?;
        let title = format!(
            "{} ({variant}, top {}): {}",
            task.title(),
            cell.spec.subset_size,
            cell.model.display_name()
        );
        let rel = PathBuf::from(PLOTS_DIR).join(format!("summary_{task}_{variant}.svg"));
        write_text(&output_dir.join(&rel), &summary_chart(&set, &title, top_k)?)?;
        files.summary_plots.push(rel);
    }
    Ok(files)
}

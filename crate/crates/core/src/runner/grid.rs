use std::fs::File;
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig};
use crate::cohort::{
    build_matrix_with, coverage, rank_lab_tests, stratified_split, undersample, CohortMatrix, LabRegistry, Task,
    TaskSpec, Variant,
};
use crate::comorbidity::LetterTable;
use crate::domain::{apply_inclusion_filters, ingest_cohort, ingest_dir, ExclusionReport, Hospitalization};
use crate::error::{Error, Result};
use crate::explain::{
    coef_importance, gini_importance, permutation_importance, shap_summary, tree_shap, write_summary_csv,
    AttributionMethod, AttributionSet,
};
use crate::learners::{fit, save_model, ModelKind};
use crate::metrics::{evaluate, EvalReport};
use crate::seed::{derive_seed, rng_from};
use crate::synth::generate;

pub const MODELS_DIR: &str = "models";
pub const ATTRIBUTIONS_DIR: &str = "attributions";
pub const MATRICES_DIR: &str = "matrices";
pub const GRID_FILE: &str = "grid.json";

/// Filtered hospitalizations with their lab ranking.
#[derive(Debug, Clone)]
pub struct PreparedCohort {
    pub records: Vec<Hospitalization>,
    pub registry: LabRegistry,
    pub exclusions: ExclusionReport,
}

pub fn load_records(data: &DataSource) -> Result<Vec<Hospitalization>> {
    match data {
        DataSource::Dir { path } => Ok(ingest_dir(path)?.records),
        DataSource::Files {
            hospitalizations,
            labs,
            diagnoses,
        } => Ok(ingest_cohort(hospitalizations, labs, diagnoses)?.records),
        DataSource::Synth(cfg) => generate(cfg),
    }
}

pub fn prepare_cohort(data: &DataSource) -> Result<PreparedCohort> {
    let (records, exclusions) = apply_inclusion_filters(load_records(data)?);
    let registry = rank_lab_tests(&records);
    Ok(PreparedCohort {
        records,
        registry,
        exclusions,
    })
}

fn spec_parts(spec: &TaskSpec) -> [String; 3] {
    [
        spec.subset_size.to_string(),
        spec.variant.to_string(),
        spec.task.to_string(),
    ]
}

/// Seed of one grid cell, a function of the cell's coordinates only.
pub fn cell_seed(master: u64, spec: &TaskSpec, model: ModelKind, purpose: &str) -> u64 {
    let [subset, variant, task] = spec_parts(spec);
    derive_seed(master, &[purpose, &subset, &variant, &task, model.code()])
}

/// Seed shared by all models of one (subset, variant, task) environment.
pub fn environment_seed(master: u64, spec: &TaskSpec, purpose: &str) -> u64 {
    let [subset, variant, task] = spec_parts(spec);
    derive_seed(master, &[purpose, &subset, &variant, &task])
}

/// Train/test matrices of one environment, shared by every model.
#[derive(Debug, Clone)]
pub struct EnvironmentData {
    pub train: CohortMatrix,
    pub test: CohortMatrix,
}

/// Matrix, optional undersampling, then stratified split.
pub fn prepare_environment(
    cohort: &PreparedCohort,
    spec: &TaskSpec,
    config: &ExperimentConfig,
    letters: &LetterTable,
) -> Result<EnvironmentData> {
    let matrix = build_matrix_with(&cohort.records, &cohort.registry, spec, letters)?;
    let matrix = if config.undersample {
        undersample(&matrix, environment_seed(config.seed, spec, "undersample"))?
    } else {
        matrix
    };
    let (train, test) = stratified_split(
        &matrix,
        config.test_fraction,
        environment_seed(config.seed, spec, "split"),
    )?;
    Ok(EnvironmentData { train, test })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    /// Paths are relative to the output directory.
    Done {
        report: EvalReport,
        model_path: PathBuf,
        attribution_path: PathBuf,
        summary_path: PathBuf,
    },
    Skipped {
        reason: String,
    },
    Failed {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub spec: TaskSpec,
    pub model: ModelKind,
    pub outcome: CellOutcome,
}

impl CellResult {
    pub fn report(&self) -> Option<&EvalReport> {
        match &self.outcome {
            CellOutcome::Done { report, .. } => Some(report),
            _ => None,
        }
    }

    pub fn file_stem(&self) -> String {
        format!("{}_{}", self.spec.slug(), self.model.code())
    }

    /// Canonical ordering key: task, subset, variant, model.
    pub fn sort_key(&self) -> (Task, usize, Variant, ModelKind) {
        (self.spec.task, self.spec.subset_size, self.spec.variant, self.model)
    }
}

/// One row per attempted cell, in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub seed: u64,
    pub n_records: usize,
    pub n_excluded: usize,
    pub cells: Vec<CellResult>,
}

impl GridResult {
    pub fn completed(&self) -> impl Iterator<Item = (&CellResult, &EvalReport)> {
        self.cells.iter().filter_map(|c| c.report().map(|r| (c, r)))
    }

    pub fn n_completed(&self) -> usize {
        self.completed().count()
    }

    pub fn n_failed(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c.outcome, CellOutcome::Failed { .. }))
            .count()
    }

    pub fn sort(&mut self) {
        self.cells.sort_by_key(|c| c.sort_key());
    }

    pub fn save(&self, output_dir: &Path) -> Result<()> {
        let path = output_dir.join(GRID_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(output_dir: &Path) -> Result<Self> {
        let path = output_dir.join(GRID_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Malformed {
            file: path.display().to_string(),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }
}

pub(crate) fn create_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn make_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Errors that describe the cohort rather than the model.
fn is_skip(e: &Error) -> bool {
    matches!(
        e,
        Error::DegenerateCohort { .. } | Error::SingleClass | Error::InvalidInput(_)
    )
}

/// Attribution with the default method of the model kind.
pub fn attribute(
    model: &crate::learners::TrainedModel,
    test: &CohortMatrix,
    instances: usize,
    permutation_repeats: usize,
    seed: u64,
) -> Result<AttributionSet> {
    let method = AttributionMethod::for_kind(model.kind);
    attribute_with(method, model, test, instances, permutation_repeats, seed)
}

/// TreeSHAP explains `instances` rows drawn without replacement from `test`;
/// the other methods score features globally.
pub fn attribute_with(
    method: AttributionMethod,
    model: &crate::learners::TrainedModel,
    test: &CohortMatrix,
    instances: usize,
    permutation_repeats: usize,
    seed: u64,
) -> Result<AttributionSet> {
    match method {
        AttributionMethod::TreeShap => {
            let n = test.n_samples();
            let mut picked = sample(&mut rng_from(seed), n, instances.min(n)).into_vec();
            picked.sort_unstable();
            let subset = test.select_rows(&picked);
            Ok(tree_shap(model, subset.rows.view())?.with_row_ids(subset.row_ids))
        }
        AttributionMethod::CoefMagnitude => coef_importance(model),
        AttributionMethod::Permutation => permutation_importance(model, test, permutation_repeats, seed),
        AttributionMethod::GiniImportance => gini_importance(model),
    }
}

/// Ranked attribution summary: mean |phi| for local sets, the score itself
/// for global ones.
pub fn write_attribution_summary(set: &AttributionSet, top_k: usize, path: &Path) -> Result<()> {
    if set.method.is_local() {
        let rows = shap_summary(set, top_k)?;
        create_file(path, |w| write_summary_csv(&rows, w))
    } else {
        let scores = set.global_scores().unwrap_or_default();
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then_with(|| set.feature_names[a].cmp(&set.feature_names[b]))
        });
        create_file(path, |w| {
            writeln!(w, "rank,feature,importance")?;
            for (rank, &j) in order.iter().take(top_k).enumerate() {
                writeln!(w, "{},{},{:.6}", rank + 1, set.feature_names[j], scores[j])?;
            }
            Ok(())
        })
    }
}

fn run_cell(
    env: &EnvironmentData,
    spec: &TaskSpec,
    kind: ModelKind,
    config: &ExperimentConfig,
) -> Result<CellOutcome> {
    let out = &config.output_dir;
    let stem = format!("{}_{}", spec.slug(), kind.code());
    let params = config.hyperparams.for_kind(kind);
    let model = fit(kind, &env.train, &params, cell_seed(config.seed, spec, kind, "fit"))?;
    let report = evaluate(&model, &env.test)?;

    let model_path = PathBuf::from(MODELS_DIR).join(format!("{stem}.sepm"));
    save_model(&model, &out.join(&model_path))?;

    let set = attribute(
        &model,
        &env.test,
        config.shap_instances,
        config.permutation_repeats,
        cell_seed(config.seed, spec, kind, "attribute"),
    )?;
    let attribution_path = PathBuf::from(ATTRIBUTIONS_DIR).join(format!("{stem}.csv"));
    create_file(&out.join(&attribution_path), |w| set.write_csv(w))?;
    let json_path = out.join(ATTRIBUTIONS_DIR).join(format!("{stem}.json"));
    let json = serde_json::to_string(&set).map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
    let summary_path = PathBuf::from(ATTRIBUTIONS_DIR).join(format!("{stem}_summary.csv"));
    write_attribution_summary(&set, config.summary_top_k, &out.join(&summary_path))?;

    Ok(CellOutcome::Done {
        report,
        model_path,
        attribution_path,
        summary_path,
    })
}

/// Runs `f`, turning non-I/O errors and panics into a cell outcome.
fn isolate(f: impl FnOnce() -> Result<CellOutcome>) -> Result<CellOutcome> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(outcome)) => Ok(outcome),
        Ok(Err(e @ Error::Io { .. })) => Err(e),
        Ok(Err(e)) => Ok(CellOutcome::Failed { error: e.to_string() }),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Ok(CellOutcome::Failed {
                error: format!("panic: {msg}"),
            })
        }
    }
}

/// Writes the lab ranking with per-subset coverage next to the grid outputs.
pub fn write_registry_tables(cohort: &PreparedCohort, dir: &Path) -> Result<()> {
    create_file(&dir.join("registry.csv"), |w| cohort.registry.write_csv(w))?;
    let mut rows = Vec::new();
    for n in crate::cohort::SUBSET_SIZES {
        if n <= cohort.registry.len() {
            rows.push((n, coverage(&cohort.records, &cohort.registry, n)?));
        }
    }
    create_file(&dir.join("coverage.csv"), |w| {
        writeln!(w, "subset,coverage")?;
        for (n, c) in &rows {
            writeln!(w, "{n},{c:.6}")?;
        }
        Ok(())
    })
}

/// Runs every (task, variant, subset, model) cell of `config`.
///
/// I/O failures abort the grid; any other error, or a panic, is recorded on
/// its own cell. Environments whose cohort cannot be built or split mark all
/// their cells as skipped.
pub fn run_grid(config: &ExperimentConfig) -> Result<GridResult> {
    config.validate()?;
    let out = &config.output_dir;
    for sub in ["", MODELS_DIR, ATTRIBUTIONS_DIR, MATRICES_DIR] {
        make_dir(&out.join(sub))?;
    }
    let letters = match &config.letter_table {
        Some(path) => LetterTable::from_csv(path)?,
        None => LetterTable::default(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;

    pool.install(|| {
        let cohort = prepare_cohort(&config.data)?;
        log::info!(
            "cohort: {} hospitalizations kept, {} excluded, {} lab tests",
            cohort.records.len(),
            cohort.exclusions.total(),
            cohort.registry.len()
        );
        write_registry_tables(&cohort, out)?;

        let (tasks, variants, subsets, models) = config.axes();
        let mut specs = Vec::new();
        for &task in &tasks {
            for &variant in &variants {
                for &subset in &subsets {
                    specs.push(TaskSpec::new(task, variant, subset)?);
                }
            }
        }

        let envs: Vec<(TaskSpec, std::result::Result<EnvironmentData, String>)> = specs
            .par_iter()
            .map(|spec| {
                let data = match prepare_environment(&cohort, spec, config, &letters) {
                    Ok(data) => data,
                    Err(e) if is_skip(&e) => {
                        log::warn!("{}: skipped: {e}", spec.slug());
                        return Ok((*spec, Err(e.to_string())));
                    }
                    Err(e) => return Err(e),
                };
                let dir = out.join(MATRICES_DIR);
                data.train.save_csv(&dir.join(format!("{}_train.csv", spec.slug())))?;
                data.test.save_csv(&dir.join(format!("{}_test.csv", spec.slug())))?;
                Ok((*spec, Ok(data)))
            })
            .collect::<Result<_>>()?;

        let jobs: Vec<(&TaskSpec, &std::result::Result<EnvironmentData, String>, ModelKind)> = envs
            .iter()
            .flat_map(|(spec, env)| models.iter().map(move |&m| (spec, env, m)))
            .collect();

        let cells: Vec<CellResult> = jobs
            .into_par_iter()
            .map(|(spec, env, kind)| {
                let outcome = match env {
                    Err(reason) => CellOutcome::Skipped { reason: reason.clone() },
                    Ok(data) => isolate(|| run_cell(data, spec, kind, config))?,
                };
                match &outcome {
                    CellOutcome::Done { report, .. } => {
                        log::info!("{} {}: auc {:.4}", spec.slug(), kind.code(), report.auc)
                    }
                    CellOutcome::Failed { error } => log::error!("{} {}: {error}", spec.slug(), kind.code()),
                    CellOutcome::Skipped { .. } => {}
                }
                Ok(CellResult {
                    spec: *spec,
                    model: kind,
                    outcome,
                })
            })
            .collect::<Result<_>>()?;

        let mut grid = GridResult {
            seed: config.seed,
            n_records: cohort.records.len(),
            n_excluded: cohort.exclusions.total(),
            cells,
        };
        grid.sort();
        grid.save(out)?;
        Ok(grid)
    })
}

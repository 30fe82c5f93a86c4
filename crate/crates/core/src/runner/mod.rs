//! Experiment grid over (task, variant, subset, model), with result tables
//! and SVG plots.
//!
//! Output layout under `output_dir`:
//!
//! - `registry.csv`, `coverage.csv`: lab ranking and per-subset coverage
//! - `matrices/<slug>_{train,test}.csv`: the split of each environment
//! - `models/<slug>_<model>.sepm`: fitted models
//! - `attributions/<slug>_<model>.{csv,json}` and `_summary.csv`
//! - `grid.json`: every attempted cell with its outcome
//! - `results.csv`, `skipped.csv`, `best_models.csv`, `plots/*.svg`

pub mod config;
pub mod grid;
pub mod report;
pub mod svg;

pub use config::{DataSource, ExperimentConfig};
pub use grid::{
    attribute, attribute_with, cell_seed, environment_seed, load_records, prepare_cohort, prepare_environment, run_grid, CellOutcome,
    CellResult, EnvironmentData, GridResult, PreparedCohort,
};
pub use report::{best_models, emit_report, summary_chart, ReportFiles};

//! `sepsis`: synthetic cohorts, lab ranking, the experiment grid, model
//! explanations and report regeneration.
//!
//! Exit codes: 0 success, 1 I/O or other fatal error, 2 configuration error,
//! 3 every grid cell failed or was skipped.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::bail;
use clap::{Args, Parser, Subcommand};
use sepsis_core::cohort::{coverage, CohortMatrix, Task, Variant, SUBSET_SIZES};
use sepsis_core::comorbidity::ComorbidityCategory;
use sepsis_core::explain::AttributionMethod;
use sepsis_core::learners::{load_model, ModelKind};
use sepsis_core::runner::{
    attribute_with, emit_report, prepare_cohort, run_grid, summary_chart, DataSource, ExperimentConfig, GridResult,
};
use sepsis_core::synth::{generate, inject_comorbidity_signal, SynthConfig};
use sepsis_core::Error;

#[derive(Parser)]
#[command(name = "sepsis", version, about = "Sepsis outcome prediction from sparse EHR records")]
struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort as three CSV files.
    Synth(SynthArgs),
    /// Rank lab tests by frequency and tabulate subset coverage.
    Rank(RankArgs),
    /// Run the experiment grid and write tables and plots.
    Run(RunArgs),
    /// Attribute a saved model's predictions on a matrix CSV.
    Explain(ExplainArgs),
    /// Re-emit tables and plots from an existing grid output directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for hospitalizations.csv, labs.csv, diagnoses.csv.
    #[arg(long)]
    out: PathBuf,
    /// Generator config (TOML); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_records: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Raise the death odds of a category's carriers, e.g. `Respiratory=4`.
    #[arg(long, value_name = "CATEGORY=MULTIPLIER")]
    inject: Option<String>,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Directory with hospitalizations.csv, labs.csv and diagnoses.csv.
    #[arg(long, conflicts_with = "synth_records")]
    data: Option<PathBuf>,
    /// Generate a default synthetic cohort of this size instead.
    #[arg(long)]
    synth_records: Option<usize>,
    /// Seed of the generated cohort.
    #[arg(long, default_value_t = 0)]
    synth_seed: u64,
}

impl DataArgs {
    fn source(&self) -> DataSource {
        match (&self.data, self.synth_records) {
            (Some(path), _) => DataSource::Dir { path: path.clone() },
            (None, n) => DataSource::Synth(SynthConfig {
                n_records: n.unwrap_or(SynthConfig::default().n_records),
                seed: self.synth_seed,
                ..SynthConfig::default()
            }),
        }
    }
}

#[derive(Args)]
struct RankArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Write registry.csv and coverage.csv here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Master seed; every split, fit and attribution seed derives from it.
    #[arg(long)]
    seed: u64,
    /// Experiment config (TOML); its values override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "results")]
    output_dir: PathBuf,
    /// Comma-separated, e.g. `10,20`.
    #[arg(long, value_delimiter = ',')]
    subsets: Option<Vec<usize>>,
    /// Comma-separated: nodiag, diag.
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<Variant>>,
    /// Comma-separated task names.
    #[arg(long, value_delimiter = ',')]
    tasks: Option<Vec<Task>>,
    /// Comma-separated: lr, svc, rf, gb, histgb.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<ModelKind>>,
    /// Keep the class imbalance.
    #[arg(long)]
    no_undersample: bool,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

impl RunArgs {
    fn config(&self) -> anyhow::Result<ExperimentConfig> {
        let defaults = ExperimentConfig::default();
        let flags = ExperimentConfig {
            data: self.data.source(),
            subset_sizes: self.subsets.clone().unwrap_or(defaults.subset_sizes.clone()),
            variants: self.variants.clone().unwrap_or(defaults.variants.clone()),
            tasks: self.tasks.clone().unwrap_or(defaults.tasks.clone()),
            models: self.models.clone().unwrap_or(defaults.models.clone()),
            seed: self.seed,
            output_dir: self.output_dir.clone(),
            undersample: !self.no_undersample,
            test_fraction: self.test_fraction,
            jobs: self.jobs,
            ..defaults
        };
        let cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                flags.with_overrides(&text)?
            }
            None => {
                flags.validate()?;
                flags
            }
        };
        Ok(cfg)
    }
}

#[derive(Args)]
struct ExplainArgs {
    /// Model file written by `run`.
    #[arg(long)]
    model: PathBuf,
    /// Matrix CSV with the model's feature columns, e.g. a test split.
    #[arg(long)]
    matrix: PathBuf,
    /// Attribution CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Ranked summary CSV.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Summary plot.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// tree_shap, coef_magnitude, permutation or gini_importance; defaults
    /// to the model kind's method.
    #[arg(long)]
    method: Option<AttributionMethod>,
    /// Rows explained by TreeSHAP.
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 5)]
    permutation_repeats: usize,
    #[arg(long, default_value_t = 15)]
    top_k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding grid.json from a previous `run`.
    #[arg(long, default_value = "results")]
    output_dir: PathBuf,
    #[arg(long, default_value_t = 15)]
    top_k: usize,
}

fn synth(args: &SynthArgs) -> anyhow::Result<()> {
    let mut cfg = match &args.config {
        Some(path) => SynthConfig::load(path)?,
        None => SynthConfig::default(),
    };
    if let Some(n) = args.n_records {
        cfg.n_records = n;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
    let mut records = generate(&cfg)?;
    if let Some(spec) = &args.inject {
        let (name, mult) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--inject expects CATEGORY=MULTIPLIER, got {spec:?}")))?;
        let category: ComorbidityCategory = name.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
        let mult: f64 = mult
            .parse()
            .map_err(|_| Error::Config(format!("invalid multiplier {mult:?}")))?;
        records = inject_comorbidity_signal(&records, category, mult, cfg.seed)?;
    }
    sepsis_core::synth::write(&args.out, &records)?;
    println!("wrote {} hospitalizations to {}", records.len(), args.out.display());
    Ok(())
}

fn rank(args: &RankArgs) -> anyhow::Result<()> {
    let cohort = prepare_cohort(&args.data.source())?;
    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "{} hospitalizations kept, {} excluded, {} lab tests",
        cohort.records.len(),
        cohort.exclusions.total(),
        cohort.registry.len()
    )?;
    writeln!(stdout, "subset  coverage")?;
    for n in SUBSET_SIZES.into_iter().filter(|&n| n <= cohort.registry.len()) {
        let c = coverage(&cohort.records, &cohort.registry, n)?;
        writeln!(stdout, "top {n:<3} {:>7.2}%", 100.0 * c)?;
    }
    if let Some(out) = &args.out {
        fs::create_dir_all(out).map_err(|e| Error::Io {
            path: out.clone(),
            source: e,
        })?;
        sepsis_core::runner::grid::write_registry_tables(&cohort, out)?;
    }
    Ok(())
}

/// Exit status 3 when no cell completed.
fn run(args: &RunArgs) -> anyhow::Result<ExitCode> {
    let cfg = args.config()?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::Io {
        path: cfg.output_dir.clone(),
        source: e,
    })?;
    let resolved = cfg.output_dir.join("config.toml");
    fs::write(&resolved, cfg.to_toml()?).map_err(|e| Error::Io {
        path: resolved,
        source: e,
    })?;
    let grid = run_grid(&cfg)?;
    let completed = grid.n_completed();
    println!(
        "{} cells: {completed} completed, {} failed, {} skipped",
        grid.cells.len(),
        grid.n_failed(),
        grid.cells.len() - completed - grid.n_failed()
    );
    if completed == 0 {
        eprintln!("error: no grid cell completed");
        return Ok(ExitCode::from(3));
    }
    emit_report(&grid, &cfg.output_dir, cfg.summary_top_k)?;
    println!("results in {}", cfg.output_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn write_file(path: &Path, body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    body(&mut buf)?;
    fs::write(path, buf).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn explain(args: &ExplainArgs) -> anyhow::Result<()> {
    let model = load_model(&args.model)?;
    let matrix = CohortMatrix::load_csv(&args.matrix)?;
    if matrix.feature_names != model.feature_names {
        bail!(Error::InvalidInput(format!(
            "{} columns do not match the model's {} features",
            args.matrix.display(),
            model.n_features()
        )));
    }
    let method = args.method.unwrap_or(AttributionMethod::for_kind(model.kind));
    let set = attribute_with(method, &model, &matrix, args.instances, args.permutation_repeats, args.seed)?;
    write_file(&args.out, |w| set.write_csv(w))?;
    if let Some(path) = &args.summary {
        sepsis_core::runner::grid::write_attribution_summary(&set, args.top_k, path)?;
    }
    if let Some(path) = &args.svg {
        let title = format!("{} attribution", model.kind.display_name());
        let svg = summary_chart(&set, &title, args.top_k)?;
        fs::write(path, svg).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
    }
    println!("{} attributions written to {}", method.as_str(), args.out.display());
    Ok(())
}

fn report(args: &ReportArgs) -> anyhow::Result<()> {
    let grid = GridResult::load(&args.output_dir)?;
    let files = emit_report(&grid, &args.output_dir, args.top_k)?;
    println!(
        "wrote {}, {}, {} and {} plots",
        files.results.display(),
        files.skipped.display(),
        files.best_models.display(),
        files.auc_plots.len() + files.summary_plots.len()
    );
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::InvalidInput(_) | Error::Synth(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Synth(a) => synth(a).map(|_| ExitCode::SUCCESS),
        Command::Rank(a) => rank(a).map(|_| ExitCode::SUCCESS),
        Command::Run(a) => run(a),
        Command::Explain(a) => explain(a).map(|_| ExitCode::SUCCESS),
        Command::Report(a) => report(a).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

//! Sepsis outcome prediction from sparse EHR records.
//!
//! The crate covers the whole pipeline:
//!
//! - [`domain`]: hospitalization records, CSV ingestion and inclusion filters
//! - [`comorbidity`]: ICD-10 letter to comorbidity category encoding
//! - [`cohort`]: lab-test ranking, full-coverage design matrices, undersampling
//!   and stratified splitting
//! - [`learners`]: logistic regression, linear SVC, random forest, gradient
//!   boosting and histogram gradient boosting, plus the model file format
//! - [`metrics`]: confusion matrix, weighted precision/recall/F1, midrank ROC AUC
//! - [`explain`]: exact path-dependent TreeSHAP and global importances
//! - [`synth`]: synthetic cohort generator with injectable outcome signal
//! - [`runner`]: the experiment grid, results tables and SVG plots
//!
//! ```no_run
//! use sepsis_core::synth::{generate, SynthConfig};
//! use sepsis_core::cohort::{rank_lab_tests, build_matrix, TaskSpec, Task, Variant};
//!
//! # fn main() -> sepsis_core::Result<()> {
//! let records = generate(&SynthConfig { n_records: 2_000, ..SynthConfig::default() })?;
//! let registry = rank_lab_tests(&records);
//! let spec = TaskSpec::new(Task::DeceasedVsRecovered, Variant::Extended, 10)?;
//! let matrix = build_matrix(&records, &registry, &spec)?;
//! println!("{} rows x {} features", matrix.n_samples(), matrix.n_features());
//! # Ok(())
//! # }
//! ```

pub mod cohort;
pub mod comorbidity;
pub mod domain;
pub mod error;
pub mod explain;
pub mod learners;
pub mod metrics;
pub mod runner;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};

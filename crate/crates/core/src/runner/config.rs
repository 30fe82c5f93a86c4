use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cohort::{Task, Variant, SUBSET_SIZES};
use crate::error::{Error, Result};
use crate::learners::{HyperParamSet, ModelKind};
use crate::synth::SynthConfig;

/// Where the grid's hospitalizations come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// A directory holding `hospitalizations.csv`, `labs.csv` and `diagnoses.csv`.
    Dir { path: PathBuf },
    Files {
        hospitalizations: PathBuf,
        labs: PathBuf,
        diagnoses: PathBuf,
    },
    Synth(SynthConfig),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synth(SynthConfig::default())
    }
}

/// Grid values that serialize as their short names.
pub trait GridKey: Sized + Copy {
    fn key(self) -> &'static str;
    fn parse_key(s: &str) -> Result<Self>;
}

impl GridKey for Task {
    fn key(self) -> &'static str {
        self.as_str()
    }
    fn parse_key(s: &str) -> Result<Self> {
        s.parse()
    }
}

impl GridKey for Variant {
    fn key(self) -> &'static str {
        self.as_str()
    }
    fn parse_key(s: &str) -> Result<Self> {
        s.parse()
    }
}

impl GridKey for ModelKind {
    fn key(self) -> &'static str {
        self.code()
    }
    fn parse_key(s: &str) -> Result<Self> {
        s.parse()
    }
}

mod keys {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    use super::GridKey;

    pub fn serialize<S: Serializer, T: GridKey>(values: &[T], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(values.iter().map(|v| v.key()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, T: GridKey>(d: D) -> Result<Vec<T>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| T::parse_key(s).map_err(D::Error::custom))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Optional `letter,category` CSV replacing the embedded ICD-10 table.
    pub letter_table: Option<PathBuf>,
    pub subset_sizes: Vec<usize>,
    #[serde(with = "keys")]
    pub variants: Vec<Variant>,
    #[serde(with = "keys")]
    pub tasks: Vec<Task>,
    #[serde(with = "keys")]
    pub models: Vec<ModelKind>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub undersample: bool,
    pub test_fraction: f64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    /// Test rows explained per TreeSHAP cell.
    pub shap_instances: usize,
    pub permutation_repeats: usize,
    /// Features kept in summary tables and plots.
    pub summary_top_k: usize,
    pub hyperparams: HyperParamSet,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataSource::default(),
            letter_table: None,
            subset_sizes: SUBSET_SIZES.to_vec(),
            variants: Variant::ALL.to_vec(),
            tasks: Task::ALL.to_vec(),
            models: ModelKind::ALL.to_vec(),
            seed: 0,
            output_dir: PathBuf::from("results"),
            undersample: true,
            test_fraction: 0.2,
            jobs: 0,
            shap_instances: 100,
            permutation_repeats: 5,
            summary_top_k: 15,
            hyperparams: HyperParamSet::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Applies a TOML document on top of `self`: keys present in `overlay`
    /// win, nested tables merge key by key, and a `data` table replaces the
    /// data source whole.
    pub fn with_overrides(&self, overlay: &str) -> Result<Self> {
        let cfg_err = |e: &dyn std::fmt::Display| Error::Config(e.to_string());
        let mut base = toml::Table::try_from(self).map_err(|e| cfg_err(&e))?;
        let overlay: toml::Table = overlay.parse().map_err(|e| cfg_err(&e))?;
        for (key, value) in overlay {
            if key == "data" {
                base.insert(key, value);
            } else {
                merge(&mut base, key, value);
            }
        }
        let cfg: ExperimentConfig = toml::Value::Table(base).try_into().map_err(|e| cfg_err(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let nonempty = |name: &str, empty: bool| {
            if empty {
                Err(Error::Config(format!("{name} must not be empty")))
            } else {
                Ok(())
            }
        };
        nonempty("subset_sizes", self.subset_sizes.is_empty())?;
        nonempty("variants", self.variants.is_empty())?;
        nonempty("tasks", self.tasks.is_empty())?;
        nonempty("models", self.models.is_empty())?;
        if let Some(bad) = self.subset_sizes.iter().find(|n| !SUBSET_SIZES.contains(n)) {
            return Err(Error::Config(format!("subset size {bad} not in {SUBSET_SIZES:?}")));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.permutation_repeats == 0 {
            return Err(Error::Config("permutation_repeats must be positive".into()));
        }
        if let DataSource::Synth(s) = &self.data {
            s.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        self.hyperparams.validate()
    }

    /// Grid axes with duplicates removed, in canonical order.
    pub(crate) fn axes(&self) -> (Vec<Task>, Vec<Variant>, Vec<usize>, Vec<ModelKind>) {
        fn canon<T: Ord + Clone>(v: &[T]) -> Vec<T> {
            let mut v = v.to_vec();
            v.sort();
            v.dedup();
            v
        }
        (
            canon(&self.tasks),
            canon(&self.variants),
            canon(&self.subset_sizes),
            canon(&self.models),
        )
    }
}

fn merge(table: &mut toml::Table, key: String, value: toml::Value) {
    match (table.get_mut(&key), value) {
        (Some(toml::Value::Table(dst)), toml::Value::Table(src)) => {
            for (k, v) in src {
                merge(dst, k, v);
            }
        }
        (_, value) => {
            table.insert(key, value);
        }
    }
}

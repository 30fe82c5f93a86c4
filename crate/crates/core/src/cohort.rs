//! Task-specific design matrices.
//!
//! A matrix for `(task, variant, top-n)` keeps only hospitalizations holding at
//! least one result for every one of the `n` most frequent lab tests, averages
//! each test's series over the stay and optionally appends comorbidity flags.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::comorbidity::{ComorbidityCategory, LetterTable};
use crate::domain::{Hospitalization, OutcomeLabel};
use crate::error::{Error, Result};
use crate::seed::rng_from;

pub const SUBSET_SIZES: [usize; 5] = [10, 20, 30, 40, 50];

pub const DEMOGRAPHIC_FEATURES: [&str; 3] = ["age", "sex", "origin_env"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTest {
    pub test_name: String,
    pub patient_count: usize,
    pub patient_fraction: f64,
}

/// Lab tests ordered by the number of hospitalizations holding a result,
/// descending, ties by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabRegistry {
    pub ranked_tests: Vec<RankedTest>,
    pub n_records: usize,
}

impl LabRegistry {
    pub fn len(&self) -> usize {
        self.ranked_tests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked_tests.is_empty()
    }

    pub fn top(&self, n: usize) -> Result<Vec<&str>> {
        if n > self.len() {
            return Err(Error::InvalidInput(format!(
                "subset size {n} exceeds the {} ranked lab tests",
                self.len()
            )));
        }
        Ok(self.ranked_tests[..n].iter().map(|t| t.test_name.as_str()).collect())
    }

    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "rank,test_name,patient_count,patient_fraction")?;
        for (i, t) in self.ranked_tests.iter().enumerate() {
            writeln!(w, "{},{},{},{:.6}", i + 1, t.test_name, t.patient_count, t.patient_fraction)?;
        }
        Ok(())
    }
}

pub fn rank_lab_tests(records: &[Hospitalization]) -> LabRegistry {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut seen: HashSet<&str> = HashSet::new();
    for rec in records {
        seen.clear();
        for lab in &rec.labs {
            if seen.insert(lab.test_name.as_str()) {
                *counts.entry(lab.test_name.as_str()).or_default() += 1;
            }
        }
    }
    let n = records.len();
    let mut ranked: Vec<RankedTest> = counts
        .into_iter()
        .map(|(name, count)| RankedTest {
            test_name: name.to_string(),
            patient_count: count,
            patient_fraction: if n == 0 { 0.0 } else { count as f64 / n as f64 },
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.patient_count
            .cmp(&a.patient_count)
            .then_with(|| a.test_name.cmp(&b.test_name))
    });
    LabRegistry {
        ranked_tests: ranked,
        n_records: n,
    }
}

fn has_all(rec: &Hospitalization, tests: &[&str]) -> bool {
    let present: HashSet<&str> = rec.labs.iter().map(|l| l.test_name.as_str()).collect();
    tests.iter().all(|t| present.contains(t))
}

/// Fraction of records with at least one result for each of the top-`n` tests.
pub fn coverage(records: &[Hospitalization], registry: &LabRegistry, n: usize) -> Result<f64> {
    let tests = registry.top(n)?;
    if records.is_empty() {
        return Ok(0.0);
    }
    let covered = records.iter().filter(|r| has_all(r, &tests)).count();
    Ok(covered as f64 / records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    DeceasedVsDischarged,
    DeceasedVsRecovered,
    RecoveredVsAmeliorated,
}

impl Task {
    pub const ALL: [Task; 3] = [
        Task::DeceasedVsDischarged,
        Task::DeceasedVsRecovered,
        Task::RecoveredVsAmeliorated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::DeceasedVsDischarged => "deceased_vs_discharged",
            Task::DeceasedVsRecovered => "deceased_vs_recovered",
            Task::RecoveredVsAmeliorated => "recovered_vs_ameliorated",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Task::DeceasedVsDischarged => "Deceased vs. Discharged",
            Task::DeceasedVsRecovered => "Deceased vs. Recovered",
            Task::RecoveredVsAmeliorated => "Recovered vs. Ameliorated",
        }
    }

    /// Positive (1) / negative (0) label, or `None` when the outcome is not
    /// part of this task.
    pub fn label(self, outcome: OutcomeLabel) -> Option<u8> {
        use OutcomeLabel::*;
        match (self, outcome) {
            (Task::DeceasedVsDischarged, Deceased) => Some(1),
            (Task::DeceasedVsDischarged, _) => Some(0),
            (Task::DeceasedVsRecovered, Deceased) => Some(1),
            (Task::DeceasedVsRecovered, Recovered) => Some(0),
            (Task::RecoveredVsAmeliorated, Recovered) => Some(1),
            (Task::RecoveredVsAmeliorated, Improved) => Some(0),
            _ => None,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "deceased_vs_discharged" | "dvd" | "1" => Ok(Task::DeceasedVsDischarged),
            "deceased_vs_recovered" | "dvr" | "2" => Ok(Task::DeceasedVsRecovered),
            "recovered_vs_ameliorated" | "recovered_vs_improved" | "rva" | "3" => {
                Ok(Task::RecoveredVsAmeliorated)
            }
            other => Err(Error::InvalidInput(format!("unknown task {other:?}"))),
        }
    }
}

/// `Base` = demographics + labs, `Extended` adds comorbidity flags. In result
/// tables they appear as `nodiag` / `diag`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    Base,
    Extended,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Base, Variant::Extended];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Base => "nodiag",
            Variant::Extended => "diag",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "base" | "nodiag" => Ok(Variant::Base),
            "extended" | "diag" => Ok(Variant::Extended),
            other => Err(Error::InvalidInput(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task: Task,
    pub variant: Variant,
    pub subset_size: usize,
}

impl TaskSpec {
    pub fn new(task: Task, variant: Variant, subset_size: usize) -> Result<Self> {
        if !SUBSET_SIZES.contains(&subset_size) {
            return Err(Error::InvalidInput(format!(
                "subset size {subset_size} not in {SUBSET_SIZES:?}"
            )));
        }
        Ok(TaskSpec {
            task,
            variant,
            subset_size,
        })
    }

    pub fn slug(&self) -> String {
        format!("{}_{}_top{}", self.task, self.variant, self.subset_size)
    }
}

/// Dense design matrix with binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortMatrix {
    pub feature_names: Vec<String>,
    pub rows: Array2<f64>,
    pub labels: Vec<u8>,
    pub row_ids: Vec<String>,
}

impl CohortMatrix {
    pub fn new(
        feature_names: Vec<String>,
        rows: Array2<f64>,
        labels: Vec<u8>,
        row_ids: Vec<String>,
    ) -> Result<Self> {
        if rows.ncols() != feature_names.len() {
            return Err(Error::ShapeMismatch {
                expected: feature_names.len(),
                got: rows.ncols(),
            });
        }
        if labels.len() != rows.nrows() || row_ids.len() != rows.nrows() {
            return Err(Error::InvalidInput(format!(
                "{} rows but {} labels and {} row ids",
                rows.nrows(),
                labels.len(),
                row_ids.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::InvalidInput("labels must be 0 or 1".into()));
        }
        if let Some(((row, col), _)) = rows.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { row, col });
        }
        Ok(CohortMatrix {
            feature_names,
            rows,
            labels,
            row_ids,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.rows.ncols()
    }

    /// (negatives, positives)
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        (self.labels.len() - pos, pos)
    }

    pub fn select_rows(&self, indices: &[usize]) -> CohortMatrix {
        CohortMatrix {
            feature_names: self.feature_names.clone(),
            rows: self.rows.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            row_ids: indices.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }

    /// Header is the feature names followed by `label` and `row_id`.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        let mut header = self.feature_names.join(",");
        header.push_str(",label,row_id");
        writeln!(w, "{header}")?;
        for (i, row) in self.rows.outer_iter().enumerate() {
            for v in row.iter() {
                write!(w, "{v},")?;
            }
            writeln!(w, "{},{}", self.labels[i], self.row_ids[i])?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file_name = path.display().to_string();
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Malformed {
            file: file_name.clone(),
            line: 0,
            message: e.to_string(),
        })?;
        let headers = reader.headers().map_err(|e| Error::Malformed {
            file: file_name.clone(),
            line: 1,
            message: e.to_string(),
        })?;
        let n_cols = headers.len();
        if n_cols < 2 || &headers[n_cols - 2] != "label" || &headers[n_cols - 1] != "row_id" {
            return Err(Error::Malformed {
                file: file_name,
                line: 1,
                message: "header must end with label,row_id".into(),
            });
        }
        let feature_names: Vec<String> = headers.iter().take(n_cols - 2).map(str::to_string).collect();
        let d = feature_names.len();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut row_ids = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::Malformed {
                file: file_name.clone(),
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let bad = |message: &str| Error::Malformed {
                file: file_name.clone(),
                line,
                message: message.to_string(),
            };
            for j in 0..d {
                data.push(rec[j].parse::<f64>().map_err(|_| bad("non-numeric feature"))?);
            }
            labels.push(rec[d].parse::<u8>().map_err(|_| bad("label must be 0 or 1"))?);
            row_ids.push(rec[d + 1].to_string());
        }
        let rows = Array2::from_shape_vec((labels.len(), d), data)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        CohortMatrix::new(feature_names, rows, labels, row_ids)
    }
}

pub fn feature_names(registry: &LabRegistry, spec: &TaskSpec) -> Result<Vec<String>> {
    let mut names: Vec<String> = DEMOGRAPHIC_FEATURES.iter().map(|s| s.to_string()).collect();
    names.extend(registry.top(spec.subset_size)?.into_iter().map(str::to_string));
    if spec.variant == Variant::Extended {
        names.extend(ComorbidityCategory::ALL.iter().map(|c| c.as_str().to_string()));
    }
    Ok(names)
}

pub fn build_matrix(records: &[Hospitalization], registry: &LabRegistry, spec: &TaskSpec) -> Result<CohortMatrix> {
    build_matrix_with(records, registry, spec, &LetterTable::default())
}

/// As [`build_matrix`], with a custom ICD-10 letter table.
pub fn build_matrix_with(
    records: &[Hospitalization],
    registry: &LabRegistry,
    spec: &TaskSpec,
    table: &LetterTable,
) -> Result<CohortMatrix> {
    let tests = registry.top(spec.subset_size)?;
    let column: HashMap<&str, usize> = tests.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let names = feature_names(registry, spec)?;
    let d = names.len();

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut row_ids = Vec::new();
    let mut sums = vec![0.0f64; tests.len()];
    let mut counts = vec![0usize; tests.len()];

    for rec in records {
        let Some(label) = spec.task.label(rec.outcome) else {
            continue;
        };
        sums.iter_mut().for_each(|s| *s = 0.0);
        counts.iter_mut().for_each(|c| *c = 0);
        for lab in &rec.labs {
            if let Some(&j) = column.get(lab.test_name.as_str()) {
                sums[j] += lab.value;
                counts[j] += 1;
            }
        }
        if counts.iter().any(|&c| c == 0) {
            continue;
        }
        data.push(rec.patient_age as f64);
        data.push(rec.sex.code());
        data.push(rec.origin_env.code());
        data.extend(sums.iter().zip(&counts).map(|(s, &c)| s / c as f64));
        if spec.variant == Variant::Extended {
            data.extend(table.encode(&rec.diagnoses).as_features());
        }
        labels.push(label);
        row_ids.push(rec.record_id.clone());
    }

    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives < 2 || negatives < 2 {
        return Err(Error::DegenerateCohort { positives, negatives });
    }
    let rows = Array2::from_shape_vec((labels.len(), d), data)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    CohortMatrix::new(names, rows, labels, row_ids)
}

fn class_indices(matrix: &CohortMatrix) -> [Vec<usize>; 2] {
    let mut idx = [Vec::new(), Vec::new()];
    for (i, &l) in matrix.labels.iter().enumerate() {
        idx[l as usize].push(i);
    }
    idx
}

fn sort_by_row_id(matrix: &CohortMatrix, indices: &mut [usize]) {
    indices.sort_by(|&a, &b| matrix.row_ids[a].cmp(&matrix.row_ids[b]).then(a.cmp(&b)));
}

/// Random undersampling of the majority class down to the minority count.
pub fn undersample(matrix: &CohortMatrix, seed: u64) -> Result<CohortMatrix> {
    let [neg, pos] = class_indices(matrix);
    if neg.is_empty() || pos.is_empty() {
        return Err(Error::SingleClass);
    }
    let (minority, mut majority) = if pos.len() <= neg.len() { (pos, neg) } else { (neg, pos) };
    let mut rng = rng_from(seed);
    majority.shuffle(&mut rng);
    majority.truncate(minority.len());
    let mut keep = minority;
    keep.extend(majority);
    sort_by_row_id(matrix, &mut keep);
    Ok(matrix.select_rows(&keep))
}

/// Number of test rows drawn from a class of `count` samples.
pub fn stratum_test_count(count: usize, test_fraction: f64) -> usize {
    ((count as f64) * test_fraction).round() as usize
}

/// Per-class stratified train/test split. Both halves keep the input row order.
pub fn stratified_split(
    matrix: &CohortMatrix,
    test_fraction: f64,
    seed: u64,
) -> Result<(CohortMatrix, CohortMatrix)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidInput(format!(
            "test fraction {test_fraction} outside [0, 1)"
        )));
    }
    let (neg, pos) = matrix.class_counts();
    if neg < 2 || pos < 2 {
        return Err(Error::DegenerateCohort {
            positives: pos,
            negatives: neg,
        });
    }
    let mut rng = rng_from(seed);
    let mut is_test = vec![false; matrix.n_samples()];
    for mut members in class_indices(matrix) {
        let n_test = stratum_test_count(members.len(), test_fraction);
        members.shuffle(&mut rng);
        for &i in &members[..n_test] {
            is_test[i] = true;
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..matrix.n_samples()).partition(|&i| is_test[i]);
    Ok((matrix.select_rows(&train), matrix.select_rows(&test)))
}

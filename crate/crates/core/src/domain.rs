//! EHR data model, CSV ingestion and the cohort inclusion filters.
//!
//! Three comma-separated files with header rows are joined on `record_id`:
//!
//! | file                 | columns                                                             |
//! |----------------------|---------------------------------------------------------------------|
//! | `hospitalizations.csv` | record_id, age, sex, origin_env, admit_date, discharge_date, outcome |
//! | `labs.csv`           | record_id, test_name, value, timestamp                              |
//! | `diagnoses.csv`      | record_id, icd10_code, rank                                         |
//!
//! Dates are ISO-8601 (`2020-03-14`, `2020-03-14T08:30:00`).

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HOSPITALIZATIONS_FILE: &str = "hospitalizations.csv";
pub const LABS_FILE: &str = "labs.csv";
pub const DIAGNOSES_FILE: &str = "diagnoses.csv";

const HOSP_HEADER: [&str; 7] = [
    "record_id",
    "age",
    "sex",
    "origin_env",
    "admit_date",
    "discharge_date",
    "outcome",
];
const LABS_HEADER: [&str; 4] = ["record_id", "test_name", "value", "timestamp"];
const DIAG_HEADER: [&str; 3] = ["record_id", "icd10_code", "rank"];

macro_rules! string_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal $(| $alias:literal)*),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                let lower = s.trim().to_ascii_lowercase();
                match lower.as_str() {
                    $($text $(| $alias)* => Ok($name::$variant),)+
                    _ => Err(format!("unknown {} {:?}", stringify!($name), s)),
                }
            }
        }
    };
}

string_enum!(Sex { Female => "female" | "f", Male => "male" | "m" });

string_enum!(
    /// Environment of origin; label-encoded as urban=0, rural=1, unknown=2.
    OriginEnv { Urban => "urban", Rural => "rural", Unknown => "unknown" | "" }
);

string_enum!(
    /// Type of discharge.
    OutcomeLabel {
        Deceased => "deceased",
        Recovered => "recovered",
        Improved => "improved" | "ameliorated",
        Worsened => "worsened",
    }
);

string_enum!(DiagnosisRank { Primary => "primary", Secondary => "secondary" });

impl OriginEnv {
    pub fn code(self) -> f64 {
        match self {
            OriginEnv::Urban => 0.0,
            OriginEnv::Rural => 1.0,
            OriginEnv::Unknown => 2.0,
        }
    }
}

impl Sex {
    pub fn code(self) -> f64 {
        match self {
            Sex::Female => 0.0,
            Sex::Male => 1.0,
        }
    }
}

/// An ICD-10 diagnosis code such as `A41.9`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Icd10Code {
    code: String,
    pub rank: DiagnosisRank,
}

impl Icd10Code {
    /// Accepts an uppercase letter, one or more digits and an optional
    /// `.suffix` of digits or letters.
    pub fn new(code: &str, rank: DiagnosisRank) -> Result<Self> {
        let code = code.trim();
        if !is_valid_icd10(code) {
            return Err(Error::InvalidIcd10(code.to_string()));
        }
        Ok(Icd10Code {
            code: code.to_string(),
            rank,
        })
    }

    pub fn code(&self) -> &str {
        &self.code
    }

    pub fn letter(&self) -> char {
        // validated non-empty at construction
        self.code.as_bytes()[0] as char
    }
}

fn is_valid_icd10(code: &str) -> bool {
    let bytes = code.as_bytes();
    let Some((&first, rest)) = bytes.split_first() else {
        return false;
    };
    if !first.is_ascii_uppercase() {
        return false;
    }
    let (stem, suffix) = match rest.iter().position(|&b| b == b'.') {
        Some(dot) => (&rest[..dot], Some(&rest[dot + 1..])),
        None => (rest, None),
    };
    if stem.is_empty() || !stem.iter().all(u8::is_ascii_digit) {
        return false;
    }
    match suffix {
        None => true,
        Some(s) => !s.is_empty() && s.iter().all(|b| b.is_ascii_digit() || b.is_ascii_uppercase()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabResult {
    pub test_name: String,
    pub value: f64,
    pub timestamp: NaiveDateTime,
}

impl LabResult {
    pub fn new(test_name: impl Into<String>, value: f64, timestamp: NaiveDateTime) -> Result<Self> {
        let test_name = test_name.into();
        if test_name.trim().is_empty() {
            return Err(Error::InvalidInput("empty lab test name".into()));
        }
        if !value.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite value for lab test {test_name}"
            )));
        }
        Ok(LabResult {
            test_name,
            value,
            timestamp,
        })
    }
}

/// One hospital admission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hospitalization {
    pub record_id: String,
    pub patient_age: u32,
    pub sex: Sex,
    pub origin_env: OriginEnv,
    pub admit_date: NaiveDate,
    pub discharge_date: NaiveDate,
    pub outcome: OutcomeLabel,
    pub diagnoses: Vec<Icd10Code>,
    pub labs: Vec<LabResult>,
}

impl Hospitalization {
    pub fn stay_days(&self) -> i64 {
        (self.discharge_date - self.admit_date).num_days()
    }

    /// Whether `ts` lies within the admission window, both dates inclusive.
    pub fn covers_timestamp(&self, ts: NaiveDateTime) -> bool {
        let start = self.admit_date.and_time(NaiveTime::MIN);
        let end = self
            .discharge_date
            .and_hms_opt(23, 59, 59)
            .expect("valid wall-clock time");
        ts >= start && ts <= end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrphanSource {
    Labs,
    Diagnoses,
}

/// A lab or diagnosis row whose `record_id` matched no hospitalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Orphan {
    pub source: OrphanSource,
    pub record_id: String,
    pub line: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OrphanReport {
    pub orphans: Vec<Orphan>,
}

impl OrphanReport {
    pub fn count(&self, source: OrphanSource) -> usize {
        self.orphans.iter().filter(|o| o.source == source).count()
    }

    pub fn is_empty(&self) -> bool {
        self.orphans.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct IngestedCohort {
    /// Sorted by `record_id`.
    pub records: Vec<Hospitalization>,
    pub orphans: OrphanReport,
    pub lab_rows: usize,
    pub diagnosis_rows: usize,
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Maps header names to column positions, failing on any missing column.
fn column_index<const N: usize>(
    reader: &mut csv::Reader<File>,
    expected: [&str; N],
    file: &str,
) -> Result<[usize; N]> {
    let headers = reader.headers().map_err(|e| Error::Malformed {
        file: file.to_string(),
        line: 1,
        message: e.to_string(),
    })?;
    let mut idx = [0usize; N];
    for (slot, name) in idx.iter_mut().zip(expected) {
        *slot = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Malformed {
                file: file.to_string(),
                line: 1,
                message: format!("missing column {name:?}"),
            })?;
    }
    Ok(idx)
}

struct RowCtx<'a> {
    file: &'a str,
    line: u64,
}

impl RowCtx<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Malformed {
            file: self.file.to_string(),
            line: self.line,
            message: message.into(),
        }
    }

    fn field<'r>(&self, row: &'r csv::StringRecord, i: usize, name: &str) -> Result<&'r str> {
        row.get(i)
            .ok_or_else(|| self.err(format!("missing field {name}")))
    }
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .ok()
        .or_else(|| parse_date(s).map(|d| d.and_time(NaiveTime::MIN)))
}

fn read_hospitalizations(path: &Path) -> Result<BTreeMap<String, Hospitalization>> {
    let file = file_label(path);
    let mut reader = open_reader(path)?;
    let [c_id, c_age, c_sex, c_env, c_admit, c_dis, c_out] =
        column_index(&mut reader, HOSP_HEADER, &file)?;
    let mut out = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Malformed {
            file: file.clone(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let ctx = RowCtx {
            file: &file,
            line: row.position().map(|p| p.line()).unwrap_or(0),
        };
        let id = ctx.field(&row, c_id, "record_id")?;
        if id.is_empty() {
            return Err(ctx.err("empty record_id"));
        }
        let age: u32 = ctx
            .field(&row, c_age, "age")?
            .parse()
            .map_err(|_| ctx.err("age must be a non-negative integer"))?;
        let sex: Sex = ctx.field(&row, c_sex, "sex")?.parse().map_err(|e: String| ctx.err(e))?;
        let origin_env = row
            .get(c_env)
            .unwrap_or("")
            .parse()
            .unwrap_or(OriginEnv::Unknown);
        let admit_date = parse_date(ctx.field(&row, c_admit, "admit_date")?)
            .ok_or_else(|| ctx.err("admit_date must be YYYY-MM-DD"))?;
        let discharge_date = parse_date(ctx.field(&row, c_dis, "discharge_date")?)
            .ok_or_else(|| ctx.err("discharge_date must be YYYY-MM-DD"))?;
        if discharge_date < admit_date {
            return Err(ctx.err("discharge_date precedes admit_date"));
        }
        let outcome: OutcomeLabel = ctx
            .field(&row, c_out, "outcome")?
            .parse()
            .map_err(|e: String| ctx.err(e))?;
        let record = Hospitalization {
            record_id: id.to_string(),
            patient_age: age,
            sex,
            origin_env,
            admit_date,
            discharge_date,
            outcome,
            diagnoses: Vec::new(),
            labs: Vec::new(),
        };
        if out.insert(id.to_string(), record).is_some() {
            return Err(Error::DuplicateRecord {
                id: id.to_string(),
                line: ctx.line,
            });
        }
    }
    Ok(out)
}

fn attach_labs(
    path: &Path,
    records: &mut BTreeMap<String, Hospitalization>,
    orphans: &mut OrphanReport,
) -> Result<usize> {
    let file = file_label(path);
    let mut reader = open_reader(path)?;
    let [c_id, c_test, c_val, c_ts] = column_index(&mut reader, LABS_HEADER, &file)?;
    let mut rows = 0;
    let mut raw = csv::StringRecord::new();
    loop {
        let more = reader.read_record(&mut raw).map_err(|e| Error::Malformed {
            file: file.clone(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        rows += 1;
        let ctx = RowCtx {
            file: &file,
            line: raw.position().map(|p| p.line()).unwrap_or(0),
        };
        let id = ctx.field(&raw, c_id, "record_id")?;
        let test_name = ctx.field(&raw, c_test, "test_name")?;
        let value: f64 = ctx
            .field(&raw, c_val, "value")?
            .parse()
            .map_err(|_| ctx.err("value must be a decimal number"))?;
        let timestamp = parse_timestamp(ctx.field(&raw, c_ts, "timestamp")?)
            .ok_or_else(|| ctx.err("timestamp must be ISO-8601"))?;
        let lab = LabResult::new(test_name, value, timestamp).map_err(|e| ctx.err(e.to_string()))?;
        match records.get_mut(id) {
            Some(rec) => {
                if !rec.covers_timestamp(timestamp) {
                    return Err(ctx.err(format!(
                        "lab timestamp {timestamp} outside stay of record {id}"
                    )));
                }
                rec.labs.push(lab);
            }
            None => orphans.orphans.push(Orphan {
                source: OrphanSource::Labs,
                record_id: id.to_string(),
                line: ctx.line,
            }),
        }
    }
    Ok(rows)
}

fn attach_diagnoses(
    path: &Path,
    records: &mut BTreeMap<String, Hospitalization>,
    orphans: &mut OrphanReport,
) -> Result<usize> {
    let file = file_label(path);
    let mut reader = open_reader(path)?;
    let [c_id, c_code, c_rank] = column_index(&mut reader, DIAG_HEADER, &file)?;
    let mut rows = 0;
    for row in reader.records() {
        let row = row.map_err(|e| Error::Malformed {
            file: file.clone(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        rows += 1;
        let ctx = RowCtx {
            file: &file,
            line: row.position().map(|p| p.line()).unwrap_or(0),
        };
        let id = ctx.field(&row, c_id, "record_id")?;
        let rank: DiagnosisRank = ctx
            .field(&row, c_rank, "rank")?
            .parse()
            .map_err(|e: String| ctx.err(e))?;
        let code = Icd10Code::new(ctx.field(&row, c_code, "icd10_code")?, rank)
            .map_err(|e| ctx.err(e.to_string()))?;
        match records.get_mut(id) {
            Some(rec) => rec.diagnoses.push(code),
            None => orphans.orphans.push(Orphan {
                source: OrphanSource::Diagnoses,
                record_id: id.to_string(),
                line: ctx.line,
            }),
        }
    }
    Ok(rows)
}

/// Reads and joins the three cohort files.
///
/// Malformed rows and duplicate hospitalization ids are fatal; lab and
/// diagnosis rows pointing at unknown ids are collected in the orphan report.
pub fn ingest_cohort(hosp_file: &Path, labs_file: &Path, diag_file: &Path) -> Result<IngestedCohort> {
    let mut by_id = read_hospitalizations(hosp_file)?;
    let mut orphans = OrphanReport::default();
    let lab_rows = attach_labs(labs_file, &mut by_id, &mut orphans)?;
    let diagnosis_rows = attach_diagnoses(diag_file, &mut by_id, &mut orphans)?;
    Ok(IngestedCohort {
        records: by_id.into_values().collect(),
        orphans,
        lab_rows,
        diagnosis_rows,
    })
}

/// Convenience wrapper over [`ingest_cohort`] for a directory holding the
/// three standard file names.
pub fn ingest_dir(dir: &Path) -> Result<IngestedCohort> {
    ingest_cohort(
        &dir.join(HOSPITALIZATIONS_FILE),
        &dir.join(LABS_FILE),
        &dir.join(DIAGNOSES_FILE),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExclusionReason {
    Under18,
    SingleDayStay,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::Under18 => "under_18",
            ExclusionReason::SingleDayStay => "single_day_stay",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExclusionReport {
    pub excluded: Vec<(String, ExclusionReason)>,
}

impl ExclusionReport {
    pub fn count(&self, reason: ExclusionReason) -> usize {
        self.excluded.iter().filter(|(_, r)| *r == reason).count()
    }

    pub fn total(&self) -> usize {
        self.excluded.len()
    }
}

pub const MIN_AGE: u32 = 18;
pub const MIN_STAY_DAYS: i64 = 1;

pub fn exclusion_reason(record: &Hospitalization) -> Option<ExclusionReason> {
    if record.patient_age < MIN_AGE {
        Some(ExclusionReason::Under18)
    } else if record.stay_days() < MIN_STAY_DAYS {
        Some(ExclusionReason::SingleDayStay)
    } else {
        None
    }
}

/// Keeps adults whose discharge is at least one calendar day after admission.
/// A record failing both rules is reported once, as `under_18`.
pub fn apply_inclusion_filters(
    records: Vec<Hospitalization>,
) -> (Vec<Hospitalization>, ExclusionReport) {
    let mut report = ExclusionReport::default();
    let mut kept = Vec::with_capacity(records.len());
    for rec in records {
        match exclusion_reason(&rec) {
            Some(reason) => report.excluded.push((rec.record_id, reason)),
            None => kept.push(rec),
        }
    }
    (kept, report)
}

fn fmt_timestamp(ts: &NaiveDateTime) -> String {
    ts.format("%Y-%m-%dT%H:%M:%S").to_string()
}

fn write_csv_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Writes the three ingestion files into `dir`, in record order.
pub fn write_cohort(dir: &Path, records: &[Hospitalization]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv_file(&dir.join(HOSPITALIZATIONS_FILE), |w| {
        writeln!(w, "{}", HOSP_HEADER.join(","))?;
        for r in records {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.record_id,
                r.patient_age,
                r.sex,
                r.origin_env,
                r.admit_date.format("%Y-%m-%d"),
                r.discharge_date.format("%Y-%m-%d"),
                r.outcome
            )?;
        }
        Ok(())
    })?;
    write_csv_file(&dir.join(LABS_FILE), |w| {
        writeln!(w, "{}", LABS_HEADER.join(","))?;
        for r in records {
            for lab in &r.labs {
                writeln!(
                    w,
                    "{},{},{},{}",
                    r.record_id,
                    lab.test_name,
                    lab.value,
                    fmt_timestamp(&lab.timestamp)
                )?;
            }
        }
        Ok(())
    })?;
    write_csv_file(&dir.join(DIAGNOSES_FILE), |w| {
        writeln!(w, "{}", DIAG_HEADER.join(","))?;
        for r in records {
            for dx in &r.diagnoses {
                writeln!(w, "{},{},{}", r.record_id, dx.code(), dx.rank)?;
            }
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    const HOSP: &str = "record_id,age,sex,origin_env,admit_date,discharge_date,outcome\n\
        H3,70,male,rural,2020-01-01,2020-01-05,deceased\n\
        H1,55,female,urban,2020-02-01,2020-02-03,recovered\n\
        H2,80,male,,2020-03-01,2020-03-09,improved\n";

    fn ingest(labs: &str, diag: &str) -> Result<IngestedCohort> {
        let dir = tempfile::tempdir().unwrap();
        let h = write(dir.path(), "h.csv", HOSP);
        let l = write(dir.path(), "l.csv", labs);
        let d = write(dir.path(), "d.csv", diag);
        ingest_cohort(&h, &l, &d)
    }

    #[test]
    fn joins_labs_by_record_id() {
        let labs = "record_id,test_name,value,timestamp\n\
            H1,Urea,40,2020-02-01T10:00:00\n\
            H1,Urea,50,2020-02-02T10:00:00\n\
            H3,AST,30.5,2020-01-02T00:00:00\n\
            H3,Urea,80,2020-01-03T00:00:00\n\
            H1,AST,22,2020-02-03T23:00:00\n";
        let c = ingest(labs, "record_id,icd10_code,rank\n").unwrap();
        assert_eq!(c.records.len(), 3);
        let ids: Vec<_> = c.records.iter().map(|r| r.record_id.as_str()).collect();
        assert_eq!(ids, ["H1", "H2", "H3"]);
        assert_eq!(c.records[0].labs.len(), 3);
        assert!(c.records[1].labs.is_empty());
        assert_eq!(c.records[2].labs.len(), 2);
        assert_eq!(c.records[1].origin_env, OriginEnv::Unknown);
        assert!(c.orphans.is_empty());
        assert_eq!(c.lab_rows, 5);
    }

    #[test]
    fn unknown_ids_become_orphans() {
        let labs = "record_id,test_name,value,timestamp\n\
            X9,Urea,40,2020-02-01T10:00:00\n";
        let diag = "record_id,icd10_code,rank\nH1,A41.9,primary\nZZ,I21,secondary\n";
        let c = ingest(labs, diag).unwrap();
        assert_eq!(
            c.orphans.orphans[0],
            Orphan {
                source: OrphanSource::Labs,
                record_id: "X9".into(),
                line: 2
            }
        );
        assert_eq!(c.orphans.count(OrphanSource::Diagnoses), 1);
        assert!(c.records.iter().all(|r| r.labs.is_empty()));
        let attached: usize = c.records.iter().map(|r| r.diagnoses.len()).sum();
        assert_eq!(attached + c.orphans.count(OrphanSource::Diagnoses), c.diagnosis_rows);
    }

    #[test]
    fn empty_labs_file() {
        let c = ingest("record_id,test_name,value,timestamp\n", "record_id,icd10_code,rank\n").unwrap();
        assert!(c.records.iter().all(|r| r.labs.is_empty()));
    }

    #[test]
    fn malformed_row_reports_line() {
        let labs = "record_id,test_name,value,timestamp\n\
            H1,Urea,40,2020-02-01T10:00:00\n\
            H1,Urea,abc,2020-02-01T10:00:00\n";
        match ingest(labs, "record_id,icd10_code,rank\n") {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_hospitalization_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let h = write(
            dir.path(),
            "h.csv",
            "record_id,age,sex,origin_env,admit_date,discharge_date,outcome\n\
             A,50,male,urban,2020-01-01,2020-01-03,deceased\n\
             A,51,male,urban,2020-01-01,2020-01-03,deceased\n",
        );
        let l = write(dir.path(), "l.csv", "record_id,test_name,value,timestamp\n");
        let d = write(dir.path(), "d.csv", "record_id,icd10_code,rank\n");
        assert!(matches!(
            ingest_cohort(&h, &l, &d),
            Err(Error::DuplicateRecord { line: 3, .. })
        ));
    }

    #[test]
    fn icd10_validation() {
        for ok in ["A41.9", "I21", "B20", "J18.0", "Z51", "U07.1"] {
            assert!(Icd10Code::new(ok, DiagnosisRank::Primary).is_ok(), "{ok}");
        }
        for bad in ["", "a41", "41.9", "A", "A41.", "AB1", "A4 1"] {
            assert!(Icd10Code::new(bad, DiagnosisRank::Primary).is_err(), "{bad}");
        }
    }

    fn rec(id: &str, age: u32, stay: i64) -> Hospitalization {
        let admit = NaiveDate::from_ymd_opt(2021, 5, 1).unwrap();
        Hospitalization {
            record_id: id.into(),
            patient_age: age,
            sex: Sex::Female,
            origin_env: OriginEnv::Urban,
            admit_date: admit,
            discharge_date: admit + chrono::Duration::days(stay),
            outcome: OutcomeLabel::Recovered,
            diagnoses: vec![],
            labs: vec![],
        }
    }

    #[test]
    fn inclusion_filters() {
        let (kept, report) =
            apply_inclusion_filters(vec![rec("a", 17, 5), rec("b", 40, 0), rec("c", 18, 2), rec("d", 18, 1)]);
        let ids: Vec<_> = kept.iter().map(|r| r.record_id.as_str()).collect();
        assert_eq!(ids, ["c", "d"]);
        assert_eq!(report.count(ExclusionReason::Under18), 1);
        assert_eq!(report.count(ExclusionReason::SingleDayStay), 1);
        assert_eq!(report.excluded[0], ("a".to_string(), ExclusionReason::Under18));
        assert_eq!(ExclusionReason::SingleDayStay.as_str(), "single_day_stay");

        let (again, second) = apply_inclusion_filters(kept.clone());
        assert_eq!(again, kept);
        assert_eq!(second.total(), 0);
    }

    #[test]
    fn write_then_ingest_round_trip() {
        let mut r = rec("R1", 66, 3);
        r.labs.push(
            LabResult::new("Urea", 41.25, r.admit_date.and_hms_opt(9, 30, 0).unwrap()).unwrap(),
        );
        r.diagnoses.push(Icd10Code::new("A41.9", DiagnosisRank::Primary).unwrap());
        let dir = tempfile::tempdir().unwrap();
        write_cohort(dir.path(), &[r.clone()]).unwrap();
        let c = ingest_dir(dir.path()).unwrap();
        assert_eq!(c.records, vec![r]);
    }
}

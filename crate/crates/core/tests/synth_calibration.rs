//! Sample statistics of the default synthetic cohort against its config.

use std::collections::HashSet;

use sepsis_core::cohort::{build_matrix, coverage, rank_lab_tests, stratified_split, undersample, Task, TaskSpec, Variant};
use sepsis_core::domain::{OutcomeLabel, Sex};
use sepsis_core::learners::{fit, HyperParams, ModelKind};
use sepsis_core::metrics::evaluate;
use sepsis_core::synth::{generate, SynthConfig};

fn full_cohort() -> (SynthConfig, Vec<sepsis_core::domain::Hospitalization>) {
    let cfg = SynthConfig {
        seed: 2024,
        ..SynthConfig::default()
    };
    let records = generate(&cfg).unwrap();
    (cfg, records)
}

#[test]
fn demographics_and_presence_match_config() {
    let (cfg, records) = full_cohort();
    assert_eq!(records.len(), 12_286);
    let n = records.len() as f64;
    let age_mean = records.iter().map(|r| r.patient_age as f64).sum::<f64>() / n;
    assert!((age_mean - 77.0).abs() <= 0.5, "age mean {age_mean}");
    let female = records.iter().filter(|r| r.sex == Sex::Female).count() as f64 / n;
    assert!((female - 0.5).abs() <= 0.02, "female fraction {female}");

    for spec in &cfg.lab_frequencies {
        let present = records
            .iter()
            .filter(|r| r.labs.iter().any(|l| l.test_name == spec.name))
            .count() as f64
            / n;
        assert!(
            (present - spec.presence).abs() <= 0.02,
            "{}: {present} vs {}",
            spec.name,
            spec.presence
        );
    }
    let deceased = records.iter().filter(|r| r.outcome == OutcomeLabel::Deceased).count() as f64 / n;
    assert!((deceased - cfg.outcome_mix.deceased).abs() < 0.02);
}

#[test]
fn coverage_strictly_decreases_and_matches_recount() {
    let (_, records) = full_cohort();
    let registry = rank_lab_tests(&records);
    let mut previous = f64::INFINITY;
    for n in [10, 20, 30, 40, 50] {
        let c = coverage(&records, &registry, n).unwrap();
        let top: HashSet<&str> = registry.top(n).unwrap().into_iter().collect();
        let recount = records
            .iter()
            .filter(|r| {
                let have: HashSet<&str> = r.labs.iter().map(|l| l.test_name.as_str()).collect();
                top.iter().all(|t| have.contains(t))
            })
            .count() as f64
            / records.len() as f64;
        assert_eq!(c, recount);
        assert!(c < previous, "coverage({n}) = {c} not below {previous}");
        previous = c;
    }
}

#[test]
fn null_signal_gives_chance_auc() {
    let cfg = SynthConfig {
        n_records: 12_286,
        signal_spec: Vec::new(),
        seed: 77,
        ..SynthConfig::default()
    };
    let records = generate(&cfg).unwrap();
    let registry = rank_lab_tests(&records);
    let spec = TaskSpec::new(Task::DeceasedVsDischarged, Variant::Extended, 10).unwrap();
    let matrix = undersample(&build_matrix(&records, &registry, &spec).unwrap(), 1).unwrap();
    let (train, test) = stratified_split(&matrix, 0.2, 2).unwrap();
    let kind = ModelKind::LogisticRegression;
    let model = fit(kind, &train, &HyperParams::default_for(kind), 3).unwrap();
    let auc = evaluate(&model, &test).unwrap().auc;
    assert!((auc - 0.5).abs() <= 0.03, "null AUC {auc}");
}

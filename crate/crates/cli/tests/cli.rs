use std::path::Path;
use std::process::{Command, Output};

use quick_xml::events::Event;
use quick_xml::Reader;

fn sepsis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sepsis"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn assert_well_formed(path: &Path) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut reader = Reader::from_str(&text);
    let mut depth = 0i32;
    loop {
        match reader.read_event() {
            Ok(Event::Start(_)) => depth += 1,
            Ok(Event::End(_)) => depth -= 1,
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(e) => panic!("{}: {e}", path.display()),
        }
    }
    assert_eq!(depth, 0, "{}", path.display());
    assert!(text.contains("version=\"1.1\""));
}

fn small_run(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        "--seed",
        "9",
        "--synth-records",
        "1500",
        "--output-dir",
        s(out),
        "--tasks",
        "deceased_vs_discharged",
        "--subsets",
        "10,50",
        "--models",
        "lr,histgb",
    ];
    args.extend_from_slice(extra);
    sepsis(&args)
}

#[test]
fn small_grid_writes_tables_plots_and_regenerates_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid");
    let run = small_run(&out, &[]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));

    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let skipped = std::fs::read_to_string(out.join("skipped.csv")).unwrap();
    // 1 task x 2 variants x 2 subsets x 2 models
    assert_eq!(results.lines().count() - 1 + skipped.lines().count() - 1, 8);
    assert!(results.starts_with("task,subset,variant,model,accuracy,precision,recall,f1,auc\n"));

    let plots: Vec<_> = std::fs::read_dir(out.join("plots")).unwrap().map(|e| e.unwrap().path()).collect();
    assert!(plots.iter().any(|p| p.ends_with("auc_deceased_vs_discharged.svg")));
    assert!(plots.iter().any(|p| p.file_name().unwrap().to_string_lossy().starts_with("summary_")));
    for p in &plots {
        assert_well_formed(p);
    }

    std::fs::remove_file(out.join("results.csv")).unwrap();
    let rep = sepsis(&["report", "--output-dir", s(&out)]);
    assert_eq!(code(&rep), 0, "{}", String::from_utf8_lossy(&rep.stderr));
    assert_eq!(std::fs::read_to_string(out.join("results.csv")).unwrap(), results);

    let model = out.join("models/deceased_vs_discharged_diag_top10_histgb.sepm");
    let matrix = out.join("matrices/deceased_vs_discharged_diag_top10_test.csv");
    let csv = dir.path().join("phi.csv");
    let svg = dir.path().join("phi.svg");
    let ex = sepsis(&[
        "explain",
        "--model",
        s(&model),
        "--matrix",
        s(&matrix),
        "--out",
        s(&csv),
        "--svg",
        s(&svg),
        "--instances",
        "20",
    ]);
    assert_eq!(code(&ex), 0, "{}", String::from_utf8_lossy(&ex.stderr));
    let phi = std::fs::read_to_string(&csv).unwrap();
    assert!(phi.starts_with("row_id,feature,phi\n"));
    assert_well_formed(&svg);

    let wrong = sepsis(&[
        "explain",
        "--model",
        s(&model),
        "--matrix",
        s(&out.join("matrices/deceased_vs_discharged_nodiag_top10_test.csv")),
        "--out",
        s(&csv),
    ]);
    assert_eq!(code(&wrong), 2);
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.toml");
    std::fs::write(&cfg, "models = [\"lr\"]\nsubset_sizes = [10]\n").unwrap();
    let out = dir.path().join("grid");
    let run = small_run(&out, &["--config", s(&cfg)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 3);
    assert!(results.lines().skip(1).all(|l| l.contains(",10,") && l.contains("Logistic Regression")));
    let resolved = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(resolved.contains("seed = 9"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");

    assert_eq!(code(&sepsis(&["run", "--output-dir", s(&out)])), 2, "missing --seed");

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "test_fraction = 2.0\n").unwrap();
    assert_eq!(code(&small_run(&out, &["--config", s(&bad)])), 2);

    let missing = dir.path().join("nowhere");
    let run = sepsis(&["run", "--seed", "1", "--data", s(&missing), "--output-dir", s(&out)]);
    assert_eq!(code(&run), 1);

    // a 30-record cohort cannot fill any top-50 environment
    let run = sepsis(&[
        "run",
        "--seed",
        "1",
        "--synth-records",
        "30",
        "--subsets",
        "50",
        "--models",
        "lr",
        "--output-dir",
        s(&out),
    ]);
    assert_eq!(code(&run), 3, "{}", String::from_utf8_lossy(&run.stderr));
}

#[test]
fn synth_and_rank_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = dir.path().join("cohort");
    let out = sepsis(&[
        "synth",
        "--out",
        s(&cohort),
        "--n-records",
        "800",
        "--seed",
        "5",
        "--inject",
        "Respiratory=3",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["hospitalizations.csv", "labs.csv", "diagnoses.csv"] {
        assert!(cohort.join(f).is_file());
    }
    let tables = dir.path().join("tables");
    let rank = sepsis(&["rank", "--data", s(&cohort), "--out", s(&tables)]);
    assert_eq!(code(&rank), 0, "{}", String::from_utf8_lossy(&rank.stderr));
    let stdout = String::from_utf8_lossy(&rank.stdout);
    assert!(stdout.contains("800 hospitalizations kept"));
    let cov = std::fs::read_to_string(tables.join("coverage.csv")).unwrap();
    assert_eq!(cov.lines().count(), 6);

    let bad = sepsis(&["synth", "--out", s(&cohort), "--inject", "Nonsense=2"]);
    assert_eq!(code(&bad), 2);
}

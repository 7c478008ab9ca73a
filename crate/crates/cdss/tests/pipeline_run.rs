use std::fs;
use std::path::Path;

use cdss::model_io::load_model;
use cdss::pipeline::{Pipeline, PipelineConfig, Stage};
use cdss::report::EvaluationReport;

fn small_config(seed: u64) -> PipelineConfig {
    let text = format!(
        "config_version = 1\nseed = {seed}\n[data]\nn = 300\n[hybrid]\nckm = \"builtin:reference\"\n"
    );
    PipelineConfig::parse(&text, Path::new(".")).unwrap()
}

#[test]
fn identical_seeds_give_identical_artifacts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    Pipeline::new(small_config(9), a.path().into()).run().unwrap();
    Pipeline::new(small_config(9), b.path().into()).run().unwrap();
    for f in ["cohort.csv", "pm.json", "rckm.json", "report.json"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
    let c = tempfile::tempdir().unwrap();
    Pipeline::new(small_config(10), c.path().into()).run().unwrap();
    assert_ne!(
        fs::read(a.path().join("cohort.csv")).unwrap(),
        fs::read(c.path().join("cohort.csv")).unwrap()
    );
}

#[test]
fn stages_resume_and_config_changes_invalidate() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(small_config(3), dir.path().into());
    let first = p.run_until(Stage::Train).unwrap();
    assert_eq!(first.executed, [Stage::Synth, Stage::Ingest, Stage::Train]);
    let second = p.run().unwrap();
    assert_eq!(second.resumed, [Stage::Synth, Stage::Ingest, Stage::Train]);
    assert_eq!(second.executed, [Stage::Rank, Stage::Hybridize, Stage::Evaluate]);

    fs::remove_file(dir.path().join("pm.json")).unwrap();
    let third = p.run().unwrap();
    assert_eq!(third.executed, [Stage::Rank, Stage::Hybridize, Stage::Evaluate]);

    let changed = Pipeline::new(small_config(4), dir.path().into());
    assert_eq!(changed.run().unwrap().executed.len(), 6);
}

#[test]
fn report_covers_every_model() {
    let dir = tempfile::tempdir().unwrap();
    Pipeline::new(small_config(5), dir.path().into()).run().unwrap();
    let report: EvaluationReport =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    for m in ["ckm", "pm", "rckm", "hybrid"] {
        let e = report.evaluation(m).unwrap();
        assert_eq!(e.total as usize, report.dataset.test);
        assert_eq!(e.confusion.total(), e.total);
    }
    assert_eq!(report.dataset.train + report.dataset.test, 300);
    assert_eq!(report.ranking.len(), 4);
    let rckm = load_model(&dir.path().join("rckm.json")).unwrap();
    assert_eq!(rckm.graft_log.len(), report.grafts);
    let text = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(text.contains("Overall accuracy"));
    assert!(text.contains("Age group"));
}

#[test]
fn missing_expert_model_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::parse("config_version = 1\n[data]\nn = 120\n", Path::new(".")).unwrap();
    let err = Pipeline::new(cfg, dir.path().into()).run().unwrap_err();
    assert_eq!(err.stage, "hybridize");
    assert!(err.validation);
    assert!(err.message.contains("hybrid.ckm"), "{}", err.message);
}

#[test]
fn csv_source_with_bad_cell_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("in.csv");
    let mut records = cdss_core::synth::synthesize_cohort(&cdss_core::synth::CohortStatistics::outpatient_reference(), 5, 1)
        .unwrap()
        .into_records();
    records.truncate(5);
    cdss::csv_io::save_cohort(&records, &csv).unwrap();
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let header: Vec<&str> = lines[0].split(',').collect();
    let col = header.iter().position(|h| *h == "bmi").unwrap();
    let mut cells: Vec<String> = lines[2].split(',').map(String::from).collect();
    cells[col] = "heavy".into();
    lines[2] = cells.join(",");
    fs::write(&csv, lines.join("\n") + "\n").unwrap();

    let cfg_text = format!(
        "config_version = 1\n[data]\nsource = \"csv\"\ncsv = \"{}\"\n[hybrid]\nckm = \"builtin:reference\"\n",
        csv.display()
    );
    let cfg = PipelineConfig::parse(&cfg_text, dir.path()).unwrap();
    let err = Pipeline::new(cfg, dir.path().join("out")).run().unwrap_err();
    assert_eq!(err.stage, "synth");
    assert!(err.validation);
    assert!(err.message.contains("bmi") && err.message.contains("row 2"), "{}", err.message);
}

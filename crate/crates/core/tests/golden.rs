//! Four-sample run compared byte for byte against checked-in output. Set
//! `CSEVAL_UPDATE_GOLDEN=1` to rewrite the expected files.

mod common;

use std::path::Path;

use approx::assert_abs_diff_eq;
use cseval_core::agreement::{METRIC_ALIGNMENT, METRIC_EXPERT, METRIC_F1};
use cseval_core::harness::{
    canonical_json, emit_report, load_manifest, run_evaluation, write_score_records, ReportFormat,
    RunResults,
};

use common::fixture;

fn run() -> RunResults {
    let manifest = load_manifest(&fixture("golden/manifest.json")).unwrap();
    run_evaluation(&manifest).unwrap()
}

fn check_golden(name: &str, actual: &[u8]) {
    let path = fixture("golden/expected").join(name);
    if std::env::var_os("CSEVAL_UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(
        expected == actual,
        "{} differs:\n{}",
        Path::new(name).display(),
        String::from_utf8_lossy(actual)
    );
}

#[test]
fn outputs_match_golden_files() {
    let results = run();
    check_golden("results.json", canonical_json(&results).as_bytes());
    check_golden("records.jsonl", write_score_records(&results.records).as_bytes());
    check_golden("report.md", &emit_report(&results, ReportFormat::Markdown).unwrap());
    check_golden("report.csv", &emit_report(&results, ReportFormat::Csv).unwrap());
}

#[test]
fn per_sample_values_match_hand_computation() {
    let results = run();
    assert!(!results.is_partial(), "{:?}", results.summary.errors);
    let record = |id: &str| results.records.iter().find(|r| r.sample_id == id).unwrap();
    let f1 = |id: &str| record(id).f1_breakdown.unwrap().f1;

    // Report restates the prompt.
    assert_eq!(f1("a1"), 1.0);
    // Severity differs: only the pathology entity of three tuples matches.
    assert_abs_diff_eq!(f1("a2"), 1.0 / 3.0, epsilon = 1e-12);
    // The unboxed second sentence is filtered out.
    assert_eq!(f1("b1"), 1.0);
    assert_eq!(record("b1").audit.as_ref().unwrap().retained_sentences.len(), 1);
    // Supplied graph: left and the effusion match; P = 2/4, R = 2/5.
    let b2 = record("b2").f1_breakdown.unwrap();
    assert_abs_diff_eq!(b2.precision, 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(b2.recall, 0.4, epsilon = 1e-12);
    assert_abs_diff_eq!(b2.f1, 4.0 / 9.0, epsilon = 1e-12);

    assert_abs_diff_eq!(record("a1").alignment.unwrap(), 1.0 / 1.25f64.sqrt(), epsilon = 1e-12);
    assert_abs_diff_eq!(record("b2").alignment.unwrap(), 0.9 / 0.91f64.sqrt(), epsilon = 1e-12);

    // b2 was re-rated by r2; the later score (0) replaces the earlier 1.
    assert_eq!(record("b2").expert_mean, Some(0.0));
    assert_eq!(record("a2").expert_mean, Some(0.5));

    let row = |finding: &str, metric: &str| {
        results
            .aggregates
            .iter()
            .find(|r| r.finding == finding && r.metric_name == metric)
            .unwrap()
            .clone()
    };
    let cardio = row("cardiomegaly", METRIC_F1);
    assert_abs_diff_eq!(cardio.mean, 2.0 / 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(cardio.std, 1.0 / 3.0, epsilon = 1e-12);
    let effusion = row("pleural effusion", METRIC_F1);
    assert_abs_diff_eq!(effusion.mean, 13.0 / 18.0, epsilon = 1e-12);
    assert_abs_diff_eq!(effusion.std, 5.0 / 18.0, epsilon = 1e-12);
    assert_abs_diff_eq!(row("cardiomegaly", METRIC_EXPERT).mean, 1.25, epsilon = 1e-12);
    assert_abs_diff_eq!(row("pleural effusion", METRIC_EXPERT).mean, 0.75, epsilon = 1e-12);
    assert_eq!(row("pleural effusion", METRIC_ALIGNMENT).n, 2);
    // Reference values from scipy.linalg.sqrtm on the same CSV files.
    assert_abs_diff_eq!(row("cardiomegaly", "fid").mean, 0.353155115, epsilon = 1e-6);
    assert_abs_diff_eq!(row("pleural effusion", "fid").mean, 0.594161749, epsilon = 1e-6);

    // Expert prefers cardiomegaly, F1 prefers pleural effusion.
    assert!(!results.rank_consistency[METRIC_F1].consistent);
}

#[test]
fn rerun_is_byte_identical() {
    let a = canonical_json(&run());
    let b = canonical_json(&run());
    assert_eq!(a, b);
}

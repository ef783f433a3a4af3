use std::fs;
use std::path::Path;
use std::process::Command;

use compresslaw::cli::{run_with, EXIT_IO, EXIT_OK, EXIT_VALIDATION};
use serde_json::Value;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str], stdin: &str) -> Run {
    let mut argv = vec!["compresslaw"];
    argv.extend_from_slice(args);
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run_with(argv, &mut stdin.as_bytes(), &mut out, &mut err);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn json(run: &Run) -> Value {
    serde_json::from_str(&run.stdout).unwrap_or_else(|e| panic!("{e}: {}", run.stdout))
}

fn law_doc(alpha: f64, beta: f64, gamma: f64, metric: &str) -> String {
    format!(
        r#"{{"schema":"compresslaw/v1","law":{{"kind":"compression","alpha":{alpha},"beta":{beta},"gamma":{gamma},"metric":"{metric}"}}}}"#
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn synth_then_fit_recovers_truth() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write(dir.path(), "truth.json", &law_doc(0.63, 1.72, 1.16, "loss"));
    let grid = write(
        dir.path(),
        "grid.json",
        r#"{"l0": [1.5, 2.0, 3.0, 4.0], "r": [0.1, 0.3, 0.5, 0.7, 0.9], "d": [0, 1, 10, 100]}"#,
    );
    let csv_path = dir.path().join("records.csv");
    let synth = run(
        &["synth", "--truth", &truth, "--grid", &grid, "--noise-std", "0", "--seed", "3", "--out", csv_path.to_str().unwrap()],
        "",
    );
    assert_eq!(synth.code, EXIT_OK, "{}", synth.stderr);
    let csv = fs::read_to_string(&csv_path).unwrap();
    assert_eq!(csv.lines().count(), 81);
    assert!(csv.starts_with("model_id,metric,l0,r,d,l\n"));

    let fit = run(&["fit", "--input", "-"], &csv);
    assert_eq!(fit.code, EXIT_OK, "{}", fit.stderr);
    let report = json(&fit);
    assert_eq!(report["schema"], "compresslaw/v1");
    assert_eq!(report["form"], "full");
    for (key, want) in [("alpha", 0.63), ("beta", 1.72), ("gamma", 1.16)] {
        let got = report["law"][key].as_f64().unwrap();
        assert!((got - want).abs() < 1e-9, "{key}: {got}");
    }
    assert_eq!(report["residuals"].as_array().unwrap().len(), 80);
    assert_eq!(report["stats"]["f_statistic"], "inf");

    // A fit report is accepted wherever a law is expected.
    let report_path = write(dir.path(), "report.json", &fit.stdout);
    let pred = run(&["predict", "--law", &report_path, "--l0", "2", "--r", "0.5", "--d", "0"], "");
    assert_eq!(pred.code, EXIT_OK, "{}", pred.stderr);
    let p = json(&pred)["prediction"].as_f64().unwrap();
    assert!((p - 6.945774153276351).abs() < 1e-8, "{p}");
}

#[test]
fn synth_is_deterministic_on_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write(dir.path(), "truth.json", &law_doc(0.98, -1.03, -0.14, "accuracy"));
    let grid = write(dir.path(), "grid.json", r#"{"l0": [0.4, 0.6], "r": [0.2, 0.5], "d": [0, 5]}"#);
    let a = run(&["synth", "--truth", &truth, "--grid", &grid, "--seed", "9"], "");
    let b = run(&["synth", "--truth", &truth, "--grid", &grid, "--seed", "9"], "");
    let c = run(&["synth", "--truth", &truth, "--grid", &grid, "--seed", "10"], "");
    assert_eq!(a.code, EXIT_OK, "{}", a.stderr);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    assert!(a.stdout.lines().skip(1).all(|l| l.starts_with("synthetic,accuracy,")));
}

#[test]
fn predict_with_identity_law_returns_l0() {
    let law = law_doc(1.0, 0.0, 0.0, "loss");
    let out = run(&["predict", "--law", "-", "--l0", "3.25", "--r", "0.4", "--d", "17"], &law);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let v = json(&out);
    assert!((v["prediction"].as_f64().unwrap() - 3.25).abs() < 1e-12);
    assert_eq!(v["metric"], "loss");
}

#[test]
fn predict_runtime_law() {
    let law = r#"{"schema":"compresslaw/v1","law":{"kind":"runtime","c":100,"beta":-0.67}}"#;
    let out = run(&["predict", "--law", "-", "--r", "0.5"], law);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let p = json(&out)["prediction"].as_f64().unwrap();
    assert!((p - 76.21120991023569).abs() < 1e-9, "{p}");
}

#[test]
fn critical_worked_example() {
    let out = run(&["critical", "--beta", "-1.18", "--sigma", "0.8", "--metric", "accuracy"], "");
    assert_eq!(out.code, EXIT_OK);
    let v = json(&out);
    assert_eq!(v["regime"], "conditionally_recoverable");
    assert!((v["r_critical"].as_f64().unwrap() - 0.2081674464332484).abs() < 1e-12);
    assert!((v["boundary"].as_f64().unwrap() - 0.4413514981453275).abs() < 1e-12);
}

#[test]
fn critical_always_recoverable_has_null_ratio() {
    let out = run(&["critical", "--beta", "-1.18", "--sigma", "0.3", "--metric", "accuracy"], "");
    assert_eq!(out.code, EXIT_OK);
    let v = json(&out);
    assert_eq!(v["regime"], "always_recoverable");
    assert!(v["r_critical"].is_null());
}

#[test]
fn min_rft_reports_bound_and_unrecoverable() {
    let law = law_doc(0.98, -1.03, -0.14, "accuracy");
    let ok = run(&["min-rft", "--law", "-", "--sigma", "0.65", "--r", "0.3"], &law);
    assert_eq!(ok.code, EXIT_OK, "{}", ok.stderr);
    assert!(json(&ok)["min_d"].is_number());
    let none = run(&["min-rft", "--law", "-", "--sigma", "0.65", "--r", "0.9"], &law);
    assert_eq!(none.code, EXIT_OK, "{}", none.stderr);
    assert_eq!(json(&none)["min_d"], "unrecoverable");
}

#[test]
fn frontier_matches_reference_and_decreases() {
    let law = law_doc(0.98, -1.03, -0.14, "accuracy");
    let r_grid = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
    let out = run(&["frontier", "--law", "-", "--l0-list", "0.6", "--r-grid", r_grid, "--d-grid", "0"], &law);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let rows = json(&out)["rows"].as_array().unwrap().clone();
    let got: Vec<f64> = rows.iter().map(|r| r["predicted"].as_f64().unwrap()).collect();
    // Reference values computed with 50-digit arithmetic.
    let want = [
        0.49866577273182333,
        0.45591863378695763,
        0.4198386076851905,
        0.3889843683781686,
        0.3623014141178571,
        0.33900058203282557,
        0.3184796130874745,
        0.3002709691724898,
        0.2840061973719992,
    ];
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(want) {
        assert!(((g - w) / w).abs() < 1e-12, "{g} vs {w}");
    }
    assert!(got.windows(2).all(|w| w[1] < w[0]));

    let csv = run(&["frontier", "--law", "-", "--l0-list", "0.6,0.7", "--r-grid", "0.5", "--d-grid", "0,10", "--format", "csv"], &law);
    assert_eq!(csv.code, EXIT_OK);
    let lines: Vec<&str> = csv.stdout.lines().collect();
    assert_eq!(lines[0], "l0,r,d,predicted");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0.6,0.5,0,"));
    assert!(lines[4].starts_with("0.7,0.5,10,"));
}

#[test]
fn plan_ranks_fixture_models() {
    let dir = tempfile::tempdir().unwrap();
    let registry = write(dir.path(), "registry.json", compresslaw::io::FIXTURE_REGISTRY_JSON);
    let out = run(
        &[
            "plan", "--registry", &registry, "--budget", "1.5e9", "--metric", "accuracy",
            "--l0", "qwen-2.5-3b=0.6", "--l0", "qwen-2.5-7b=0.7",
        ],
        "",
    );
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let v = json(&out);
    let ranked = v["ranked"].as_array().unwrap();
    assert_eq!(ranked.len(), 2);
    assert_eq!(ranked[0]["model_id"], "qwen-2.5-3b");
    assert!(ranked[0]["predicted_runtime_factor"].is_number());
    let skipped = v["skipped"].as_array().unwrap();
    assert!(skipped.iter().any(|s| s["model_id"] == "llama-3-8b"));

    let csv = run(
        &["plan", "--registry", &registry, "--budget", "1.5e9", "--metric", "accuracy", "--l0", "qwen-2.5-3b=0.6", "--format", "csv"],
        "",
    );
    assert_eq!(csv.code, EXIT_OK, "{}", csv.stderr);
    assert!(csv.stdout.starts_with("rank,model_id,required_ratio,"));
    assert!(csv.stdout.lines().nth(1).unwrap().starts_with("1,qwen-2.5-3b,"));
}

#[test]
fn plan_rejects_malformed_override() {
    let dir = tempfile::tempdir().unwrap();
    let registry = write(dir.path(), "registry.json", compresslaw::io::FIXTURE_REGISTRY_JSON);
    let out = run(&["plan", "--registry", &registry, "--budget", "1e9", "--metric", "loss", "--l0", "qwen"], "");
    assert_eq!(out.code, EXIT_VALIDATION);
    assert_eq!(json(&out)["error"]["kind"], "invalid_parameter");
}

#[test]
fn fit_strict_rejects_bad_row_with_line_number() {
    let csv = "model_id,metric,l0,r,d,l\nm,loss,2,0.1,0,2.1\nm,loss,2,1.5,0,2.2\n";
    let out = run(&["fit", "--input", "-"], csv);
    assert_eq!(out.code, EXIT_VALIDATION);
    let err = &json(&out)["error"];
    assert_eq!(err["kind"], "row");
    assert!(err["message"].as_str().unwrap().contains('3'), "{err}");
    assert!(out.stderr.starts_with("error: "));
}

#[test]
fn fit_lenient_skips_bad_rows_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write(dir.path(), "truth.json", &law_doc(0.63, 1.72, 1.16, "loss"));
    let grid = write(dir.path(), "grid.json", r#"{"l0": [1.5, 3.0], "r": [0.2, 0.6], "d": [0, 10]}"#);
    let synth = run(&["synth", "--truth", &truth, "--grid", &grid, "--seed", "1"], "");
    let mut csv = synth.stdout.clone();
    csv.push_str("synthetic,loss,2,0.5,-4,2\n");
    let out = run(&["fit", "--input", "-", "--lenient"], &csv);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let v = json(&out);
    assert_eq!(v["stats"]["n"], 8);
    assert!(v["warnings"].as_array().unwrap().iter().any(|w| w.as_str().unwrap().starts_with("skipped")));
    assert!(out.stderr.contains("warning: skipped"));
}

#[test]
fn missing_file_is_io_error() {
    let out = run(&["predict", "--law", "/nonexistent/law.json", "--l0", "1", "--r", "0.5"], "");
    assert_eq!(out.code, EXIT_IO);
    assert_eq!(json(&out)["error"]["kind"], "io");
}

#[test]
fn domain_error_is_validation_error() {
    let out = run(&["predict", "--law", "-", "--l0", "2", "--r", "1.0"], &law_doc(1.0, 1.0, 1.0, "loss"));
    assert_eq!(out.code, EXIT_VALIDATION);
    assert_eq!(json(&out)["error"]["kind"], "domain");
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = run(&["critical", "--beta", "-1", "--sigma", "0.5", "--metric", "accuracy", "--bogus"], "");
    assert_eq!(out.code, EXIT_VALIDATION);
    assert_eq!(json(&out)["error"]["kind"], "usage");
    assert!(out.stderr.contains("--bogus"));
}

#[test]
fn unknown_field_in_law_document_rejected() {
    let doc = r#"{"schema":"compresslaw/v1","law":{"kind":"compression","alpha":1,"beta":1,"gamma":1,"metric":"loss"},"extra":1}"#;
    let out = run(&["predict", "--law", "-", "--l0", "2", "--r", "0.5"], doc);
    assert_eq!(out.code, EXIT_VALIDATION);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_compresslaw");
    let ok = Command::new(bin)
        .args(["critical", "--beta", "-1.18", "--sigma", "0.8", "--metric", "accuracy"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert!((v["r_critical"].as_f64().unwrap() - 0.208).abs() < 0.002);

    let bad = Command::new(bin).args(["critical", "--beta", "0.5", "--sigma", "0.8", "--metric", "accuracy"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));

    let io = Command::new(bin).args(["fit", "--input", "/nonexistent.csv"]).output().unwrap();
    assert_eq!(io.status.code(), Some(2));
}

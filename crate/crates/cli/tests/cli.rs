use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lsvm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsvm"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn error_line(o: &Output) -> serde_json::Value {
    let err = stderr(o);
    let line = err.lines().last().expect("an error line");
    serde_json::from_str(line).expect("error line is JSON")
}

fn generate_simple(dir: &Path) {
    let o = lsvm(
        dir,
        &["generate", "simple", "--p", "36", "--sigma", "0.5", "--lines", "10", "--T", "10", "--seed", "7", "--out", "ds/"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn generate_writes_manifest_and_csv() {
    let tmp = tempfile::tempdir().unwrap();
    generate_simple(tmp.path());
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("ds/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["p"], 36);
    assert_eq!(manifest["format"], "csv");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["generator"]["kind"], "simple");
    assert_eq!(manifest["subjects"].as_array().unwrap().len(), 20);
    let csv = fs::read_to_string(tmp.path().join("ds/data.csv")).unwrap();
    assert!(csv.starts_with("subject,label,time,f0,f1,"));
    assert_eq!(csv.lines().count(), 1 + 200);
}

#[test]
fn generate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    generate_simple(tmp.path());
    let first = fs::read(tmp.path().join("ds/data.csv")).unwrap();
    generate_simple(tmp.path());
    assert_eq!(first, fs::read(tmp.path().join("ds/data.csv")).unwrap());
}

#[test]
fn resolved_config_is_printed() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lsvm(tmp.path(), &["generate", "ellipsoid", "--grid", "8", "--seed", "3", "--out", "e/"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = stdout(&o).lines().next().unwrap().to_owned();
    let v: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(v["command"], "generate");
    assert_eq!(v["config"]["seed"], 3);
    assert_eq!(v["config"]["grid"], serde_json::json!([8, 8, 8]));
}

#[test]
fn train_predict_permtest_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate_simple(dir);

    let o = lsvm(dir, &["train", "--data", "ds/", "--C", "0.001", "--out", "model.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let model: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("model.json")).unwrap()).unwrap();
    assert_eq!(model["C"], 0.001);
    assert_eq!(model["tol"], 1e-8);
    assert_eq!(model["w"].as_array().unwrap().len(), 36);
    assert_eq!(model["fingerprint"].as_str().unwrap().len(), 16);
    assert!(model["tool_version"].is_string());
    assert!(model["meta"]["iterations"].as_u64().unwrap() > 0);

    let o = lsvm(dir, &["predict", "--data", "ds/", "--model", "model.json", "--out", "pred.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).is_empty(), "same data, no fingerprint warning");
    let pred = fs::read_to_string(dir.join("pred.csv")).unwrap();
    assert_eq!(pred.lines().count(), 21);

    let o = lsvm(
        dir,
        &["permtest", "--data", "ds/", "--model", "model.json", "--B", "100", "--seed", "7", "--out", "report/"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["report.json", "raw_p.csv", "bh_p.csv", "raw_p.pgm", "bh_p.pgm", "weights.pgm", "weights.scale.txt"] {
        assert!(dir.join("report").join(f).exists(), "{f}");
    }
    let pgm = fs::read(dir.join("report/raw_p.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n6 6\n255\n"));
    assert_eq!(pgm.len(), b"P5\n6 6\n255\n".len() + 36);

    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("report/report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 7);
    assert_eq!(report["config"]["B"], 100);
    assert_eq!(report["config"]["C"], 0.001);
    assert_eq!(report["result"]["raw_p"].as_array().unwrap().len(), 36);
}

#[test]
fn permtest_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let o = lsvm(dir, &["generate", "simple", "--p", "9", "--lines", "4", "--T", "4", "--seed", "1", "--out", "ds/"]);
    assert!(o.status.success());
    let run = |out: &str| {
        let o = lsvm(dir, &["permtest", "--data", "ds/", "--B", "50", "--seed", "5", "--jobs", "2", "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(dir.join(out).join("report.json")).unwrap()
    };
    assert_eq!(run("r1"), run("r2"));
}

#[test]
fn fingerprint_mismatch_only_warns() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate_simple(dir);
    let o = lsvm(
        dir,
        &["generate", "simple", "--p", "36", "--lines", "3", "--T", "10", "--seed", "8", "--out", "other/"],
    );
    assert!(o.status.success());
    assert!(lsvm(dir, &["train", "--data", "ds/", "--out", "model.json"]).status.success());
    let o = lsvm(dir, &["predict", "--data", "other/", "--model", "model.json"]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("warning: data fingerprint"));
}

#[test]
fn raw_format_round_trips_through_training() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let args = ["--p", "4", "--lines", "3", "--T", "3", "--seed", "2"];
    let mut csv = vec!["generate", "simple", "--out", "csv/"];
    csv.extend(args);
    let mut raw = vec!["generate", "simple", "--format", "raw", "--out", "raw/"];
    raw.extend(args);
    assert!(lsvm(dir, &csv).status.success());
    assert!(lsvm(dir, &raw).status.success());
    assert!(dir.join("raw/data.lsvd").exists());
    assert!(lsvm(dir, &["train", "--data", "csv/", "--out", "a.json"]).status.success());
    assert!(lsvm(dir, &["train", "--data", "raw/", "--out", "b.json"]).status.success());
    assert_eq!(fs::read(dir.join("a.json")).unwrap(), fs::read(dir.join("b.json")).unwrap());
}

#[test]
fn bound_from_explicit_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lsvm(tmp.path(), &["bound", "--m", "5", "--n", "4", "--r", "2", "--mu", "8"]);
    assert!(o.status.success());
    let last = stdout(&o).lines().last().unwrap().to_owned();
    let v: serde_json::Value = serde_json::from_str(&last).unwrap();
    assert_eq!(v["bound"], 1);
    assert_eq!(v["branch"], "radius_margin");
}

#[test]
fn bench_writes_table_with_chosen_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lsvm(
        tmp.path(),
        &[
            "bench", "--generator-kind", "simple", "--p", "4", "--lines", "3", "--T", "3", "--trials", "5",
            "--svm-C", "0.5", "--lda-shrinkage", "0.25", "--seed", "1", "--out", "b/",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("b/bench.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config: "));
    assert!(lines.next().unwrap().contains("svm_C=0.5 lda_shrinkage=0.25"));
    assert_eq!(lines.next().unwrap(), "trial,lsvm,svm,lda");
    assert_eq!(csv.lines().count(), 3 + 5 + 1);
}

#[test]
fn unknown_flag_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lsvm(tmp.path(), &["train", "--data", "x", "--out", "m.json", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_line(&o)["error"], "UnknownFlag");
    assert_eq!(stderr(&o).lines().count(), 1);
}

#[test]
fn flag_for_another_generator_is_unknown() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lsvm(tmp.path(), &["generate", "phantom", "--p", "3", "--out", "x/"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_line(&o)["error"], "UnknownFlag");
}

#[test]
fn missing_input_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lsvm(tmp.path(), &["train", "--out", "m.json"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_line(&o)["error"], "MissingInput");

    let o = lsvm(tmp.path(), &["train", "--data", "absent/", "--out", "m.json"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_line(&o)["error"], "MissingInput");
}

#[test]
fn parse_error_reports_line() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.csv"), "subject,label,time,f0\na,1,0,1\nb,0,0,2\n").unwrap();
    let o = lsvm(tmp.path(), &["train", "--data", "bad.csv", "--out", "m.json"]);
    assert_eq!(o.status.code(), Some(1));
    let e = error_line(&o);
    assert_eq!(e["error"], "ParseError");
    assert!(e["message"].as_str().unwrap().contains("line 3"));
}

use std::path::Path;
use std::process::{Command, Output};

fn mapsurrogate(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mapsurrogate"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

const SMALL: &[&str] = &["--rows", "16", "--cols", "16", "--seed", "3"];

fn with<'a>(base: &[&'a str]) -> Vec<&'a str> {
    base.iter().chain(SMALL).copied().collect()
}

#[test]
fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(&mapsurrogate(&with(&["gen-design", "--n", "30", "--out", "design.csv"]), d));
    assert!(out.contains("maximin distance"));
    let header = std::fs::read_to_string(d.join("design.csv")).unwrap();
    assert!(header.starts_with("x1,x2,x3,x4,x5,x6,x7,x8\n"));
    assert_eq!(header.lines().count(), 31);

    ok(&mapsurrogate(&with(&["gen-bench", "--design", "design.csv", "--out-dir", "train"]), d));
    assert!(d.join("train/maps/00029.grid").is_file());

    let out = ok(&mapsurrogate(
        &with(&["train", "--design", "train/design.csv", "--maps", "train/maps", "--out", "model", "--k-tilde", "60", "--n-pc", "3", "--multistarts", "2"]),
        d,
    ));
    assert!(out.contains("kept 60 of 256 coefficients (23.4%)"), "{out}");
    assert!(d.join("model/manifest.json").is_file());

    ok(&mapsurrogate(&with(&["gen-design", "--n", "5", "--uniform", "--out", "test.csv"]), d));
    let out = ok(&mapsurrogate(&["predict", "--model", "model", "--inputs", "test.csv", "--out-dir", "pred", "--pgm", "--variance"], d));
    assert!(out.contains("pred_00004.pgm: min"), "{out}");
    assert!(d.join("pred/var_00000.grid").is_file());
    let pgm = std::fs::read(d.join("pred/pred_00000.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n16 16\n255\n"));
    assert_eq!(pgm.len(), 13 + 256);

    ok(&mapsurrogate(&with(&["gen-bench", "--design", "test.csv", "--out-dir", "test"]), d));
    let out = ok(&mapsurrogate(&["eval", "--model", "model", "--design", "test/design.csv", "--maps", "test/maps", "--out-dir", "eval"], d));
    assert!(out.contains("Q2 "), "{out}");
    assert!(std::fs::read_to_string(d.join("eval/metrics.csv")).unwrap().starts_with("metric,value\nq2,"));
    assert!(out.contains("rmse.pgm: min"));

    let out = ok(&mapsurrogate(&["sa", "--model", "model", "--out-dir", "sa", "--n0", "200", "--bootstrap", "10", "--pointwise"], d));
    assert!(out.contains("2000 model evaluations per component"), "{out}");
    let csv = std::fs::read_to_string(d.join("sa/gsi.csv")).unwrap();
    assert_eq!(csv.lines().count(), 17);
    assert!(d.join("sa/total_x8.pgm").is_file());
}

#[test]
fn cv_tune_reports_a_winner() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&mapsurrogate(&with(&["gen-design", "--n", "20", "--out", "design.csv"]), d));
    ok(&mapsurrogate(&with(&["gen-bench", "--design", "design.csv", "--out-dir", "ens", "--format", "csv"]), d));
    assert!(d.join("ens/maps/00000.csv").is_file());
    let out = ok(&mapsurrogate(
        &with(&["cv-tune", "--design", "ens/design.csv", "--maps", "ens/maps", "--k-list", "20,40", "--pc-list", "2,3", "--folds", "4", "--out", "cv.csv", "--multistarts", "1"]),
        d,
    ));
    assert!(out.contains("best: K~"), "{out}");
    let csv = std::fs::read_to_string(d.join("cv.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("run.json"),
        r#"{"grid": {"n_rows": 8, "n_cols": 8, "domain": {"z1": [0, 1], "z2": [0, 1]}}, "bounds": [[0, 1], [0, 2]], "pipeline": {"seed": 4}}"#,
    )
    .unwrap();
    ok(&mapsurrogate(&["gen-design", "--config", "run.json", "--n", "6", "--out", "a.csv"], d));
    let a = std::fs::read_to_string(d.join("a.csv")).unwrap();
    assert!(a.starts_with("x1,x2\n"));
    ok(&mapsurrogate(&["gen-design", "--config", "run.json", "--n", "6", "--out", "b.csv", "--seed", "4"], d));
    assert_eq!(a, std::fs::read_to_string(d.join("b.csv")).unwrap());
    ok(&mapsurrogate(&["gen-design", "--config", "run.json", "--n", "6", "--out", "c.csv", "--seed", "5"], d));
    assert_ne!(a, std::fs::read_to_string(d.join("c.csv")).unwrap());
}

fn fails_with(out: &Output, tag: &str) {
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(tag), "expected {tag} in: {err}");
}

#[test]
fn errors_are_stage_tagged() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fails_with(&mapsurrogate(&["train", "--design", "missing.csv", "--maps", "maps", "--out", "m"], d), "[load]");
    fails_with(&mapsurrogate(&["gen-design", "--n", "4", "--out", "x.csv", "--basis", "fourier"], d), "[config]");
    fails_with(&mapsurrogate(&["predict", "--model", "nowhere", "--inputs", "x.csv", "--out-dir", "p"], d), "[load]");
    std::fs::write(d.join("bad.json"), "{\"grid\": 3}").unwrap();
    fails_with(&mapsurrogate(&["gen-design", "--config", "bad.json", "--n", "4", "--out", "x.csv"], d), "[config]");

    // identical maps reach the PCA stage and fail there
    std::fs::write(d.join("design.csv"), "0.1,0.2\n0.3,0.4\n0.5,0.6\n").unwrap();
    std::fs::create_dir(d.join("maps")).unwrap();
    for i in 0..3 {
        std::fs::write(d.join(format!("maps/{i:05}.csv")), "1,2,3,4\n5,6,7,8\n1,1,1,1\n2,2,2,2\n").unwrap();
    }
    std::fs::write(
        d.join("tiny.json"),
        r#"{"grid": {"n_rows": 4, "n_cols": 4, "domain": {"z1": [0, 1], "z2": [0, 1]}}, "bounds": [[0, 1], [0, 1]]}"#,
    )
    .unwrap();
    let out = mapsurrogate(&["train", "--config", "tiny.json", "--design", "design.csv", "--maps", "maps", "--out", "m", "--k-tilde", "4", "--n-pc", "1"], d);
    fails_with(&out, "[train] [pca]");
}

#[test]
fn usage_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = mapsurrogate(&["train"], dir.path());
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}

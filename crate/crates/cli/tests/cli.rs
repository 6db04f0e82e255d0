use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn armload(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_armload"))
        .args(args)
        .output()
        .expect("armload binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = armload(args);
    assert!(
        out.status.success(),
        "armload {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn fixture(dir: &Path, kind: &str, per_class: &str, size: &str) -> std::path::PathBuf {
    let out = dir.join(kind);
    ok(&[
        "fixtures",
        "--kind",
        kind,
        "--out",
        p(&out),
        "--per-class",
        per_class,
        "--size",
        size,
        "--seed",
        "3",
    ]);
    out
}

fn small_fixture(dir: &Path, kind: &str, per_class: &str) -> std::path::PathBuf {
    fixture(dir, kind, per_class, "64")
}

#[test]
fn extract_lbp_writes_531_columns_per_image() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = small_fixture(tmp.path(), "texture", "2");
    let csv = tmp.path().join("f.csv");
    ok(&[
        "extract",
        "--method",
        "lbp",
        "--in",
        p(&fx),
        "--out",
        p(&csv),
    ]);
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7);
    for line in &lines {
        assert_eq!(line.split(',').count(), 532);
    }
    assert!(lines[0].starts_with("label,f0,f1"));
}

#[test]
fn extract_lengths_for_every_method() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixture(tmp.path(), "blob", "1", "256");
    for (method, len) in [("lbp", 531), ("hc", 225), ("mc", 31), ("bkp", 16)] {
        let csv = tmp.path().join(format!("{method}.csv"));
        let book = tmp.path().join("book.json");
        let mut args = vec![
            "extract",
            "--method",
            method,
            "--in",
            p(&fx),
            "--out",
            p(&csv),
        ];
        if method == "bkp" {
            args.extend([
                "--codebook",
                p(&book),
                "--codebook-size",
                "16",
                "--bkp-threshold",
                "0.001",
            ]);
        }
        ok(&args);
        let text = fs::read_to_string(&csv).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header.split(',').count(), len + 1, "{method}");
        assert_eq!(text.lines().count(), 4, "{method}");
    }
}

#[test]
fn train_then_predict_with_reloaded_model_is_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = small_fixture(tmp.path(), "texture", "4");
    let csv = tmp.path().join("f.csv");
    let model = tmp.path().join("m.json");
    ok(&[
        "extract",
        "--method",
        "lbp",
        "--in",
        p(&fx),
        "--out",
        p(&csv),
    ]);
    ok(&["train", "--data", p(&csv), "--model", p(&model)]);
    let first = tmp.path().join("p1.csv");
    let second = tmp.path().join("p2.csv");
    ok(&[
        "predict",
        "--model",
        p(&model),
        "--data",
        p(&csv),
        "--out",
        p(&first),
    ]);
    ok(&[
        "predict",
        "--model",
        p(&model),
        "--data",
        p(&csv),
        "--out",
        p(&second),
    ]);
    let a = fs::read_to_string(&first).unwrap();
    assert_eq!(a, fs::read_to_string(&second).unwrap());
    assert_eq!(a.lines().count(), 13);

    let report = ok(&[
        "evaluate",
        "--truth",
        p(&csv),
        "--pred",
        p(&first),
        "--report",
        "json",
    ]);
    let json = String::from_utf8(report.stdout).unwrap();
    assert!(json.contains("\"overall_accuracy\""));
}

#[test]
fn pipeline_reports_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = small_fixture(tmp.path(), "texture", "5");
    let r1 = tmp.path().join("r1.json");
    let r2 = tmp.path().join("r2.json");
    ok(&[
        "pipeline",
        "--images",
        p(&fx),
        "--method",
        "lbp",
        "--seed",
        "9",
        "--report",
        p(&r1),
    ]);
    ok(&[
        "--jobs",
        "1",
        "pipeline",
        "--images",
        p(&fx),
        "--method",
        "lbp",
        "--seed",
        "9",
        "--report",
        p(&r2),
    ]);
    let a = fs::read(&r1).unwrap();
    assert_eq!(a, fs::read(&r2).unwrap());
    let text = String::from_utf8(a).unwrap();
    for key in [
        "\"schema_version\"",
        "\"seed\"",
        "\"config\"",
        "\"confusion\"",
        "\"per_class\"",
        "\"aggregate\"",
    ] {
        assert!(text.contains(key), "missing {key}");
    }
}

#[test]
fn pipeline_without_report_prints_json() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = small_fixture(tmp.path(), "shape", "4");
    let out = ok(&[
        "pipeline",
        "--images",
        p(&fx),
        "--method",
        "mc",
        "--seed",
        "1",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.trim_start().starts_with('{'));
    assert!(text.contains("\"train_size\": 8"));
    assert!(text.contains("\"test_size\": 4"));
}

#[test]
fn exit_codes_follow_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("m.json");

    assert_eq!(armload(&["train"]).status.code(), Some(1));
    assert_eq!(
        armload(&["pipeline", "--images", ".", "--method", "nope"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        armload(&["--jobs", "0", "fixtures", "--kind", "blob", "--out", "x"])
            .status
            .code(),
        Some(1)
    );

    let missing = tmp.path().join("missing.csv");
    assert_eq!(
        armload(&["train", "--data", p(&missing), "--model", p(&model)])
            .status
            .code(),
        Some(2)
    );

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "label,f0\na,1\nb,x\n").unwrap();
    let out = armload(&["train", "--data", p(&bad), "--model", p(&model)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let one_class = tmp.path().join("one.csv");
    fs::write(&one_class, "label,f0\na,1\na,2\n").unwrap();
    assert_eq!(
        armload(&["train", "--data", p(&one_class), "--model", p(&model)])
            .status
            .code(),
        Some(3)
    );

    let out = armload(&[
        "fixtures",
        "--kind",
        "texture",
        "--classes",
        "1",
        "--out",
        p(&tmp.path().join("fx")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn help_exits_cleanly() {
    let out = armload(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("pipeline"));
}

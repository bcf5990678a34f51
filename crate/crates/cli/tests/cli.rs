use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ocan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ocan"))
        .args(args)
        .current_dir(dir)
        .env_remove("OCAN_SEED")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = ocan(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr_line(out: &Output) -> String {
    let text = String::from_utf8_lossy(&out.stderr).into_owned();
    assert_eq!(
        text.trim_end().lines().count(),
        1,
        "error should be one line: {text}"
    );
    text
}

/// Small synthetic corpora plus a trained autoencoder and complementary bundle.
fn pipeline(dir: &Path) {
    ok(
        dir,
        &[
            "gen-synthetic",
            "--out",
            "train.csv",
            "--benign",
            "60",
            "--malicious",
            "0",
            "--seed",
            "1",
        ],
    );
    ok(
        dir,
        &[
            "gen-synthetic",
            "--out",
            "test.csv",
            "--benign",
            "20",
            "--malicious",
            "20",
            "--overlap",
            "0.2",
            "--seed",
            "2",
        ],
    );
    ok(
        dir,
        &[
            "train-ae",
            "--data",
            "train.csv",
            "--out",
            "ae.ckpt",
            "--hidden",
            "6",
            "--epochs",
            "2",
        ],
    );
    ok(
        dir,
        &[
            "train-gan",
            "--data",
            "train.csv",
            "--ae",
            "ae.ckpt",
            "--out",
            "ocan.ckpt",
            "--epochs",
            "3",
            "--g-hidden",
            "12",
            "--d-hidden",
            "12",
            "--d-features",
            "6",
            "--noise-dim",
            "8",
        ],
    );
}

#[test]
fn end_to_end_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline(d);
    ok(
        d,
        &[
            "detect",
            "--model",
            "ocan.ckpt",
            "--data",
            "test.csv",
            "--out",
            "preds.csv",
        ],
    );
    ok(
        d,
        &[
            "evaluate",
            "--predictions",
            "preds.csv",
            "--labels",
            "test.csv",
            "--out",
            "metrics.txt",
            "--roc",
            "roc.csv",
        ],
    );
    let metrics = fs::read_to_string(d.join("metrics.txt")).unwrap();
    for key in ["precision=", "recall=", "f1=", "accuracy=", "auc="] {
        assert!(
            metrics.lines().any(|l| l.starts_with(key)),
            "missing {key} in {metrics}"
        );
    }
    let preds = fs::read_to_string(d.join("preds.csv")).unwrap();
    assert_eq!(preds.lines().next(), Some("user_id,p_benign,label"));
    assert_eq!(preds.lines().count(), 41);
}

#[test]
fn detect_and_training_are_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline(d);
    let first_model = fs::read(d.join("ocan.ckpt")).unwrap();
    fs::rename(d.join("ocan.ckpt"), d.join("first.ckpt")).unwrap();
    pipeline(d);
    assert_eq!(first_model, fs::read(d.join("ocan.ckpt")).unwrap());

    ok(
        d,
        &[
            "detect",
            "--model",
            "ocan.ckpt",
            "--data",
            "test.csv",
            "--out",
            "a.csv",
        ],
    );
    ok(
        d,
        &[
            "detect",
            "--model",
            "ocan.ckpt",
            "--data",
            "test.csv",
            "--out",
            "b.csv",
        ],
    );
    assert_eq!(
        fs::read(d.join("a.csv")).unwrap(),
        fs::read(d.join("b.csv")).unwrap()
    );
}

#[test]
fn early_detect_final_scores_match_detect() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline(d);
    ok(
        d,
        &[
            "detect",
            "--model",
            "ocan.ckpt",
            "--data",
            "test.csv",
            "--out",
            "preds.csv",
            "--no-length-filter",
        ],
    );
    ok(
        d,
        &[
            "early-detect",
            "--model",
            "ocan.ckpt",
            "--data",
            "test.csv",
            "--out",
            "early.csv",
            "--steps",
            "steps.csv",
        ],
    );
    let preds = fs::read_to_string(d.join("preds.csv")).unwrap();
    let early = fs::read_to_string(d.join("early.csv")).unwrap();
    for (p, e) in preds.lines().skip(1).zip(early.lines().skip(1)) {
        assert!(e.starts_with(p), "{p} vs {e}");
    }
}

#[test]
fn probe_emits_three_rows_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline(d);
    ok(
        d,
        &[
            "probe",
            "--data",
            "train.csv",
            "--probe",
            "test.csv",
            "--ae",
            "ae.ckpt",
            "--out",
            "probes.csv",
            "--epochs",
            "4",
            "--samples",
            "20",
        ],
    );
    let text = fs::read_to_string(d.join("probes.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 4 * 3);
}

#[test]
fn train_ae_without_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ocan(dir.path(), &["train-ae", "--out", "ae.ckpt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).starts_with("ocan: error[usage]"));
    assert!(!dir.path().join("ae.ckpt").exists());
}

#[test]
fn failures_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline(d);

    let unknown = ocan(d, &["detect", "--frobnicate"]);
    let missing = ocan(
        d,
        &[
            "detect",
            "--model",
            "absent.ckpt",
            "--data",
            "test.csv",
            "--out",
            "p.csv",
        ],
    );
    let wrong_kind = ocan(
        d,
        &[
            "detect", "--model", "ae.ckpt", "--data", "test.csv", "--out", "p.csv",
        ],
    );
    let codes = [
        unknown.status.code(),
        missing.status.code(),
        wrong_kind.status.code(),
    ];
    assert_eq!(codes, [Some(2), Some(3), Some(4)]);
    assert!(stderr_line(&missing).starts_with("ocan: error[missing-file]"));
    assert!(stderr_line(&wrong_kind).starts_with("ocan: error[checkpoint]"));
    assert!(!d.join("p.csv").exists());
}

#[test]
fn inputs_are_not_modified() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline(d);
    let before: Vec<Vec<u8>> = ["train.csv", "test.csv", "ae.ckpt", "ocan.ckpt"]
        .iter()
        .map(|f| fs::read(d.join(f)).unwrap())
        .collect();
    ok(
        d,
        &[
            "detect",
            "--model",
            "ocan.ckpt",
            "--data",
            "test.csv",
            "--out",
            "preds.csv",
        ],
    );
    ok(
        d,
        &[
            "cluster",
            "--data",
            "test.csv",
            "--model",
            "ae.ckpt",
            "--out",
            "clusters.csv",
        ],
    );
    let after: Vec<Vec<u8>> = ["train.csv", "test.csv", "ae.ckpt", "ocan.ckpt"]
        .iter()
        .map(|f| fs::read(d.join(f)).unwrap())
        .collect();
    assert_eq!(before, after);
}

#[test]
fn help_shows_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = ocan(dir.path(), &["train-gan", "--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for needle in [
        "--epochs",
        "[default: 50]",
        "--batch-size",
        "[default: 32]",
        "--quantile-k",
        "[default: 5]",
        "OCAN_SEED",
    ] {
        assert!(text.contains(needle), "help lacks {needle}");
    }
    let ae = ocan(dir.path(), &["train-ae", "--help"]);
    assert!(String::from_utf8_lossy(&ae.stdout).contains("200 for lstm"));
}

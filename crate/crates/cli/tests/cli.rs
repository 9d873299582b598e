//! Command-line contract: artifacts, determinism, exit codes, config merging.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mcqdiff(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcqdiff"))
        .current_dir(root)
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("MCQDIFF_LLM_ENDPOINT")
        .output()
        .unwrap()
}

fn ok(root: &Path, args: &[&str]) {
    let out = mcqdiff(root, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn synth_irt_conserves_responses_and_respects_ranges() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--out", "a", "--seed", "1", "synth", "irt", "--items", "30", "--students", "200"]);
    let corpus = fs::read_to_string(dir.path().join("a/corpus.jsonl")).unwrap();
    let mut n = 0;
    for line in corpus.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let total: u64 = v["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
        assert_eq!(total, 200);
        n += 1;
    }
    assert_eq!(n, 30);
    let truth = fs::read_to_string(dir.path().join("a/truth.csv")).unwrap();
    for line in truth.lines().skip(1) {
        let b: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!((-2.0..=3.0).contains(&b), "{b}");
    }
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        ok(dir.path(), &["--out", out, "synth", "teacher", "--items", "40"]);
    }
    for f in ["corpus.jsonl", "augmented.jsonl", "fixtures.jsonl"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn evaluate_writes_table_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(root, &["--out", "data", "synth", "teacher", "--items", "50"]);
    let eval = |out: &str| {
        ok(
            root,
            &[
                "--out",
                out,
                "--replay",
                "data/fixtures.jsonl",
                "--method",
                "ours",
                "--method",
                "lr",
                "evaluate",
                "--corpus",
                "data/corpus.jsonl",
                "--epochs",
                "2",
            ],
        )
    };
    eval("r1");
    eval("r2");
    let table = fs::read_to_string(root.join("r1/table.txt")).unwrap();
    let header = table.lines().find(|l| l.starts_with("Method")).unwrap();
    assert_eq!(header.split_whitespace().collect::<Vec<_>>(), ["Method", "MSE", "R²", "MATCH"]);
    assert!(table.lines().any(|l| l.starts_with("Ours")));
    assert!(table.lines().any(|l| l.starts_with("LR")));
    for f in ["table.txt", "report_ours.json", "report_lr.json", "predictions_ours.csv", "folds.json"] {
        assert_eq!(fs::read(root.join("r1").join(f)).unwrap(), fs::read(root.join("r2").join(f)).unwrap(), "{f}");
    }
    for k in 0..5 {
        assert!(root.join(format!("r1/checkpoints/ours_fold{k}.json")).exists());
        assert!(root.join(format!("r1/logs/train_ours_fold{k}.jsonl")).exists());
    }

    // Re-rendering from the saved reports reproduces the table.
    ok(root, &["--out", "rendered", "report", "--from", "r1"]);
    assert_eq!(fs::read(root.join("rendered/table.txt")).unwrap(), table.as_bytes());
}

#[test]
fn missing_fixture_fails_naming_the_cache_key() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(root, &["--out", "data", "synth", "teacher", "--items", "20"]);
    let fixtures = fs::read_to_string(root.join("data/fixtures.jsonl")).unwrap();
    let (dropped, rest) = fixtures.split_once('\n').unwrap();
    fs::write(root.join("partial.jsonl"), rest).unwrap();
    let key = serde_json::from_str::<serde_json::Value>(dropped).unwrap()["cache_key"]
        .as_str()
        .unwrap()
        .to_string();
    let out = mcqdiff(
        root,
        &["--out", "aug", "--replay", "partial.jsonl", "augment", "--corpus", "data/corpus.jsonl"],
    );
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("augment stage"), "{err}");
    assert!(err.contains(&key), "{err}");
    // Completed items survive the failure.
    assert!(root.join("aug/augmented.partial.jsonl").exists());
}

#[test]
fn missing_input_is_a_named_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcqdiff(dir.path(), &["--out", "x", "calibrate", "--corpus", "nope.jsonl", "--responses", "nope.jsonl"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("calibrate stage"), "{err}");
    assert!(err.contains("nope.jsonl"), "{err}");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(root, &["--out", "data", "synth", "teacher", "--items", "30"]);
    fs::write(
        root.join("run.toml"),
        "methods = [\"lr\"]\nfold_seed = 5\ndataset = \"from-file\"\n[train]\nepochs = 1\n",
    )
    .unwrap();
    ok(
        root,
        &[
            "--config",
            "run.toml",
            "--out",
            "r",
            "--folds",
            "3",
            "--replay",
            "data/fixtures.jsonl",
            "evaluate",
            "--corpus",
            "data/corpus.jsonl",
        ],
    );
    let exp: serde_json::Value = serde_json::from_str(&fs::read_to_string(root.join("r/experiment.json")).unwrap()).unwrap();
    assert_eq!(exp["config"]["folds"], 3);
    assert_eq!(exp["config"]["fold_seed"], 5);
    assert_eq!(exp["config"]["dataset"], "from-file");
    assert_eq!(exp["config"]["train"]["epochs"], 1);
    assert_eq!(exp["seeds"]["fold"], 5);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(root.join("r/report_lr.json")).unwrap()).unwrap();
    assert_eq!(report["folds"].as_array().unwrap().len(), 3);
    assert!(!root.join("r/report_ours.json").exists());
}

#[test]
fn ingest_and_calibrate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(root, &["--out", "syn", "--seed", "3", "synth", "irt", "--items", "20", "--students", "300"]);
    ok(root, &["--out", "ing", "ingest", "--corpus", "syn/corpus.jsonl", "--responses", "syn/responses.jsonl"]);
    assert_eq!(
        fs::read(root.join("ing/corpus.jsonl")).unwrap(),
        fs::read(root.join("syn/corpus.jsonl")).unwrap()
    );
    ok(
        root,
        &["--out", "cal", "calibrate", "--corpus", "ing/corpus.jsonl", "--responses", "syn/responses.jsonl"],
    );
    let items = fs::read_to_string(root.join("cal/items.csv")).unwrap();
    assert_eq!(items.lines().count(), 21);
    assert!(root.join("cal/abilities.csv").exists());
}

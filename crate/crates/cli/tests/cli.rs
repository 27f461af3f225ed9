//! Command-level contracts: exit codes, directory handling, unknown config
//! keys, the split digest guard and rerun idempotence.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_hierpath")
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(bin()).args(args).output().expect("spawn");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn tiny_cfg(dir: &Path) -> String {
    let path = dir.join("tiny.cfg");
    fs::write(
        &path,
        "[synthetic]\nreports_per_class = 12\ntokens_min = 8\ntokens_max = 14\nsignature_size = 5\nshared_size = 40\nsignature_strength = 0.6\n\n[prep]\ntop_k = 100\nmax_len = 16\n\n[model]\nembed_dim = 8\nwindow_sizes = 2\nmaps_per_window = 4\nhidden_dim = 8\ndropout = 0.25\nepochs = 4\nbatch_size = 8\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn gen_corpus_creates_missing_out_dir_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_cfg(dir.path());
    let out = dir.path().join("deep/nested/run");
    let out_s = out.to_str().unwrap();
    let (code, _, _) = run(&["--config", &cfg, "--seed", "7", "gen-corpus", "--out-dir", out_s]);
    assert_eq!(code, 0);
    let first = fs::read(out.join("corpus.jsonl")).unwrap();
    let (code, _, _) = run(&["--config", &cfg, "--seed", "7", "gen-corpus", "--out-dir", out_s]);
    assert_eq!(code, 0);
    assert_eq!(first, fs::read(out.join("corpus.jsonl")).unwrap());
}

#[test]
fn unwritable_out_dir_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_cfg(dir.path());
    let (code, _, err) = run(&["--config", &cfg, "gen-corpus", "--out-dir", "/proc/nope"]);
    assert_eq!(code, 2, "stderr: {err}");
}

#[test]
fn unknown_config_key_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    fs::write(&path, "[model]\nembde_dim = 4\n").unwrap();
    let (code, _, err) = run(&[
        "--config",
        path.to_str().unwrap(),
        "gen-corpus",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("embde_dim"), "{err}");
}

#[test]
fn missing_corpus_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_cfg(dir.path());
    let (code, _, _) = run(&[
        "--config",
        &cfg,
        "prep",
        "--corpus",
        "/nonexistent/c.jsonl",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn eval_refuses_a_modified_split() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_cfg(dir.path());
    let d = dir.path().to_str().unwrap().to_string();
    let step = |extra: &[&str]| {
        let mut args = vec!["--config", cfg.as_str(), "--seed", "5"];
        args.extend_from_slice(extra);
        let (code, _, err) = run(&args);
        assert_eq!(code, 0, "{extra:?}: {err}");
    };
    let corpus = format!("{d}/corpus.jsonl");
    let cleaned = format!("{d}/cleaned.jsonl");
    let split = format!("{d}/split.txt");
    let vocab = format!("{d}/vocab.tsv");
    step(&["gen-corpus", "--out-dir", &d]);
    step(&["prep", "--corpus", &corpus, "--out-dir", &d]);
    step(&["split", "--corpus", &cleaned, "--out-dir", &d]);
    step(&["train-flat", "--corpus", &cleaned, "--split", &split, "--out-dir", &d]);
    step(&[
        "train-ensemble", "--corpus", &cleaned, "--split", &split, "--vocab", &vocab,
        "--out-dir", &d,
    ]);

    // Move one test report into train after the fact.
    let text = fs::read_to_string(&split).unwrap();
    let tampered = text.replacen("\ttest", "\ttrain", 1);
    assert_ne!(text, tampered);
    fs::write(&split, tampered).unwrap();

    let (code, _, err) = run(&[
        "--config", &cfg, "--seed", "5", "eval", "--corpus", &cleaned, "--split", &split,
        "--vocab", &vocab, "--flat", &format!("{d}/flat.ckpt"), "--ensemble",
        &format!("{d}/ensemble-manifest.txt"), "--out-dir", &d,
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("digest marker"), "{err}");
}

#[test]
fn report_renders_grid() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cm.csv");
    fs::write(&path, "true\\pred,C50.8,C50.9\nC50.8,3,1\nC50.9,0,4\n").unwrap();
    let (code, out, _) = run(&["report", "--confusion", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.contains("C50.8 |"), "{out}");
}

#[test]
fn help_exits_zero() {
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    for sub in [
        "gen-corpus",
        "prep",
        "split",
        "train-flat",
        "crossval",
        "analyze",
        "train-ensemble",
        "eval",
        "report",
    ] {
        assert!(out.contains(sub), "missing {sub} in help");
    }
}

#[test]
fn env_seed_fallback_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_cfg(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for (out, seed) in [(&out_a, "9"), (&out_b, "9")] {
        let status = Command::new(bin())
            .args(["--config", &cfg, "gen-corpus", "--out-dir", out.to_str().unwrap()])
            .env("HIERPATH_SEED", seed)
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(
        fs::read(out_a.join("corpus.jsonl")).unwrap(),
        fs::read(out_b.join("corpus.jsonl")).unwrap()
    );
}

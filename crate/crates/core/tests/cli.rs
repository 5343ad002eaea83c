//! End-to-end checks of the `expert-mas` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_expert-mas"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn expert-mas")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Generates a small corpus and runs it, leaving `corpus.tsv`,
/// `manifest.json` and `final.snap` in the returned directory.
fn prepared() -> TempDir {
    let dir = TempDir::new().unwrap();
    let out = bin(
        dir.path(),
        &[
            "gen-corpus",
            "--classes",
            "3",
            "--base",
            "3",
            "--learnable",
            "2",
            "--noise-pool",
            "10",
            "--length",
            "300",
            "--seed",
            "11",
            "--out",
            "corpus.tsv",
            "--manifest",
            "manifest.json",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = bin(
        dir.path(),
        &[
            "run",
            "--corpus",
            "corpus.tsv",
            "--manifest",
            "manifest.json",
            "--metrics",
            "m.jsonl",
            "--snapshot",
            "final.snap",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

#[test]
fn run_writes_metrics_ending_in_a_summary() {
    let dir = prepared();
    let metrics = fs::read_to_string(dir.path().join("m.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = metrics
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.iter().filter(|l| l["type"] == "query").count(), 300);
    let summary = lines.last().unwrap();
    assert_eq!(summary["type"], "summary");
    assert_eq!(summary["queries"], 300);
}

#[test]
fn classify_prints_a_vector_for_base_tags() {
    let dir = prepared();
    let out = bin(
        dir.path(),
        &[
            "classify",
            "--snapshot",
            "final.snap",
            "--tags",
            "c01.b00,c01.b01",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v["fallback"], false);
    assert_eq!(v["vector"][0][0], "c01");
}

#[test]
fn classify_falls_back_on_unknown_text() {
    let dir = prepared();
    let out = bin(
        dir.path(),
        &[
            "classify",
            "--snapshot",
            "final.snap",
            "--text",
            "nothing known here",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v["fallback"], true);
    assert_eq!(v["vector"].as_array().unwrap().len(), 3);
}

#[test]
fn inspect_lists_regions() {
    let dir = prepared();
    let out = bin(
        dir.path(),
        &["inspect", "--snapshot", "final.snap", "--class", "c02"],
    );
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.starts_with("class c02"), "{text}");
    assert!(text.contains("c02.b00"), "{text}");
    for region in ["K (", "M (", "D ("] {
        assert!(text.contains(region), "{text}");
    }
}

#[test]
fn gen_corpus_reads_a_spec_file_and_flags_override_it() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("spec.toml"),
        "num_classes = 4\nlength = 50\nseed = 3\n",
    )
    .unwrap();
    let out = bin(
        dir.path(),
        &[
            "gen-corpus",
            "--spec",
            "spec.toml",
            "--length",
            "20",
            "--out",
            "c.tsv",
            "--manifest",
            "m.json",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let corpus = fs::read_to_string(dir.path().join("c.tsv")).unwrap();
    assert_eq!(corpus.lines().filter(|l| !l.starts_with('#')).count(), 20);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(manifest["classes"].as_array().unwrap().len(), 4);
}

#[test]
fn compare_baseline_reports_both_modes() {
    let dir = prepared();
    let out = bin(
        dir.path(),
        &[
            "compare-baseline",
            "--corpus",
            "corpus.tsv",
            "--manifest",
            "manifest.json",
            "--json",
            "cmp.json",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("cmp.json")).unwrap()).unwrap();
    assert_eq!(report["selective"]["recount_matches"], true);
    assert_eq!(report["broadcast"]["recount_matches"], true);
    assert!(report["query_ratio"].as_f64().unwrap() < 1.0);
}

#[test]
fn missing_input_exits_with_io_code() {
    let dir = TempDir::new().unwrap();
    let out = bin(
        dir.path(),
        &["run", "--corpus", "absent.tsv", "--manifest", "absent.json"],
    );
    assert_eq!(code(&out), 3);
}

#[test]
fn malformed_corpus_exits_with_parse_code() {
    let dir = prepared();
    fs::write(dir.path().join("bad.tsv"), "o00001\tc00\n").unwrap();
    let out = bin(
        dir.path(),
        &["run", "--corpus", "bad.tsv", "--manifest", "manifest.json"],
    );
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn unreadable_snapshot_version_exits_with_parse_code() {
    let dir = prepared();
    let snap = fs::read_to_string(dir.path().join("final.snap")).unwrap();
    fs::write(
        dir.path().join("old.snap"),
        snap.replacen(" 1\n", " 99\n", 1),
    )
    .unwrap();
    let out = bin(
        dir.path(),
        &["inspect", "--snapshot", "old.snap", "--class", "c00"],
    );
    assert_eq!(code(&out), 4);
}

#[test]
fn invalid_config_exits_with_config_code() {
    let dir = prepared();
    fs::write(dir.path().join("bad.toml"), "tau_k = 0.2\ntau_m = 0.4\n").unwrap();
    let out = bin(
        dir.path(),
        &[
            "run",
            "--corpus",
            "corpus.tsv",
            "--manifest",
            "manifest.json",
            "--config",
            "bad.toml",
        ],
    );
    assert_eq!(code(&out), 5);
    fs::write(dir.path().join("unknown.toml"), "tau_q = 0.2\n").unwrap();
    let out = bin(
        dir.path(),
        &[
            "run",
            "--corpus",
            "corpus.tsv",
            "--manifest",
            "manifest.json",
            "--config",
            "unknown.toml",
        ],
    );
    assert_eq!(code(&out), 5);
}

#[test]
fn unknown_class_exits_with_domain_code() {
    let dir = prepared();
    let out = bin(
        dir.path(),
        &["inspect", "--snapshot", "final.snap", "--class", "c99"],
    );
    assert_eq!(code(&out), 7);
}

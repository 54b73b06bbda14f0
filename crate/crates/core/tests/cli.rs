//! End-to-end command-line behavior: exit codes, file handling, config
//! precedence, and reverse substitution.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

fn textsan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_textsan"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn version_reports_identities() {
    let out = textsan(&[
        "--version",
        "--bundle",
        fixture("bundle_worked_example").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("textsan"));
    assert!(stdout.contains("ChaCha12"));
    assert!(stdout.contains("reference:worked-example"));
}

#[test]
fn empty_input_gives_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.txt");
    let output = dir.path().join("out.txt");
    std::fs::write(&input, "").unwrap();
    let out = textsan(&[
        "sanitize",
        "--bundle",
        fixture("bundle_worked_example").to_str().unwrap(),
        "--format",
        "text",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(output).unwrap(), "");
}

#[test]
fn missing_bundle_exits_one_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let output = dir.path().join("out.json");
    let out = textsan(&[
        "sanitize",
        "--bundle",
        dir.path().join("no-such-bundle").to_str().unwrap(),
        "--input",
        fixture("corpus.json").to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!output.exists(), "no output file on bundle failure");
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("no-such-bundle"), "diagnostic names the path");
}

#[test]
fn unsorted_thresholds_rejected() {
    let out = textsan(&[
        "sweep",
        "--bundle",
        fixture("bundle_fixture").to_str().unwrap(),
        "--input",
        fixture("corpus.json").to_str().unwrap(),
        "--thresholds",
        "1e-1,1e-3",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_single_threshold_prints_one_row() {
    let out = textsan(&[
        "sweep",
        "--bundle",
        fixture("bundle_fixture").to_str().unwrap(),
        "--input",
        fixture("corpus.json").to_str().unwrap(),
        "--thresholds",
        "1e-3",
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = stdout.lines().collect();
    assert_eq!(rows.len(), 2, "header plus one row: {stdout}");
    assert!(rows[1].starts_with("p=1e-3"));
}

#[test]
fn desub_applies_longest_replacement_first() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.txt");
    let table = dir.path().join("table.json");
    let output = dir.path().join("out.txt");
    std::fs::write(&input, "David met Davidson at noon.\n").unwrap();
    std::fs::write(&table, r#"{"alice":"david","alicia":"davidson"}"#).unwrap();
    let out = textsan(&[
        "desub",
        "--format",
        "text",
        "--input",
        input.to_str().unwrap(),
        "--table",
        table.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(
        std::fs::read_to_string(output).unwrap(),
        "Alice met Alicia at noon.\n"
    );
}

#[test]
fn malformed_table_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.txt");
    let table = dir.path().join("table.json");
    std::fs::write(&input, "hello\n").unwrap();
    std::fs::write(&table, "[not, an, object]").unwrap();
    let out = textsan(&[
        "desub",
        "--format",
        "text",
        "--input",
        input.to_str().unwrap(),
        "--table",
        table.to_str().unwrap(),
        "--output",
        dir.path().join("out.txt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_applies_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("textsan.toml");
    let input = dir.path().join("in.txt");
    let output = dir.path().join("out.txt");
    std::fs::write(
        &config,
        format!(
            "threshold = 1e-9\nmode = \"redact\"\nbundle = {:?}\n",
            fixture("bundle_worked_example")
        ),
    )
    .unwrap();
    std::fs::write(&input, "My name is John Smith.\n").unwrap();

    // config alone: threshold 1e-9 flags nothing
    let out = textsan(&[
        "sanitize",
        "--config",
        config.to_str().unwrap(),
        "--format",
        "text",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(
        std::fs::read_to_string(&output).unwrap(),
        "My name is John Smith.\n"
    );

    // flag overrides the file threshold; redact mode comes from the file
    let out = textsan(&[
        "sanitize",
        "--config",
        config.to_str().unwrap(),
        "-p",
        "0.01",
        "--format",
        "text",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(
        std::fs::read_to_string(&output).unwrap(),
        "My name is [REDACTED] [REDACTED].\n"
    );
}

#[test]
fn diagnostics_do_not_leak_surfaces_without_optin() {
    let dir = tempfile::tempdir().unwrap();
    let output = dir.path().join("out.json");
    let out = textsan(&[
        "sanitize",
        "--bundle",
        fixture("bundle_worked_example").to_str().unwrap(),
        "-p",
        "0.01",
        "--input",
        fixture("../fixtures/corpus.json").to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
    ]);
    // worked-example vocabulary cannot cover the corpus; whatever happens,
    // stdout/stderr must not echo flagged surfaces
    let stderr = String::from_utf8(out.stderr).unwrap().to_lowercase();
    let stdout = String::from_utf8(out.stdout).unwrap().to_lowercase();
    for surface in ["alice", "becker", "avbeck", "90210"] {
        assert!(!stderr.contains(surface), "stderr leaked {surface}");
        assert!(!stdout.contains(surface), "stdout leaked {surface}");
    }
}

#[test]
fn invalid_threshold_is_a_config_error() {
    let out = textsan(&[
        "sanitize",
        "--bundle",
        fixture("bundle_worked_example").to_str().unwrap(),
        "-p",
        "1.5",
        "--input",
        fixture("corpus.json").to_str().unwrap(),
        "--output",
        "/tmp/unused-textsan-out.json",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

use std::process::{Command, Output};

fn bofip(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bofip"));
    cmd.args(args).env_remove("BOFIP_OUTPUT_DIR");
    cmd
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const SMALL: &[&str] = &[
    "run", "--problem", "sphere", "--dimension", "4", "--replications", "2", "--subspaces", "2",
    "--grid-size", "9", "--budget", "12", "--sweeps", "2",
];

#[test]
fn run_writes_traces_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = bofip(SMALL).args(["-o", out_dir.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("sphere d=4 over 2 replications"));
    for f in ["trace_rep000.csv", "trace_rep001.csv", "summary.csv"] {
        assert!(out_dir.join(f).is_file(), "missing {f}");
    }

    let inspect = bofip(&["inspect", out_dir.to_str().unwrap()]).output().unwrap();
    assert!(inspect.status.success());
    let text = stdout(&inspect);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].contains("trace_rep000.csv") && lines[1].ends_with(",true"));
}

#[test]
fn env_var_sets_output_dir_and_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let env_dir = dir.path().join("from-env");
    let out = bofip(SMALL).env("BOFIP_OUTPUT_DIR", &env_dir).output().unwrap();
    assert!(out.status.success());
    assert!(env_dir.join("summary.csv").is_file());

    let flag_dir = dir.path().join("from-flag");
    let out = bofip(SMALL)
        .args(["-o", flag_dir.to_str().unwrap(), "--dry-run"])
        .env("BOFIP_OUTPUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(stdout(&out).contains(&format!("output_dir = {:?}", flag_dir.to_str().unwrap())));
}

#[test]
fn dry_run_prints_merged_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "problem = \"repeated-branin\"\ndimension = 10\nsubspaces = 5\n").unwrap();
    let out = bofip(&["run", "-c", cfg.to_str().unwrap(), "--sweeps", "7", "--dry-run"]).output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("problem = \"repeated-branin\""));
    assert!(text.contains("sweeps = 7"));
}

#[test]
fn invalid_config_exits_with_code_2() {
    let out = bofip(&["run", "--problem", "sphere", "--dimension", "4", "--subspaces", "9", "--dry-run"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn malformed_toml_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "problem = \"sphere\"\ndimension = = 4\n").unwrap();
    let out = bofip(&["run", "-c", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn unwritable_output_exits_with_runtime_code() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = bofip(SMALL).args(["-o", blocker.join("sub").to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn suite_dry_run_lists_entries() {
    let out = bofip(&["suite", "--scale", "desk", "--only", "nn", "--dry-run"]).output().unwrap();
    assert!(out.status.success());
    assert!(stdout(&out).contains("dimension = 502"));
    let missing = bofip(&["suite", "--only", "nope", "--dry-run"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn driftfed(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_driftfed"))
        .args(args)
        .current_dir(cwd)
        .env_remove("DRIFTFED_OUT")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn validate_lists_every_problem_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(
        &cfg,
        r#"
tasks = ["binary"]
train_fraction = 1.5

[fed]
rounds = 0

[[strategies]]
kind = "retain"
retain_r = 0

[[strategies]]
kind = "avg-ema"
ema_alpha = 1.0
"#,
    )
    .unwrap();
    let out = driftfed(&["validate", "--config", "bad.toml"], dir.path());
    assert!(!out.status.success());
    let err = text(&out.stderr);
    for field in ["train_fraction", "fed", "strategies[0].retain_r", "strategies[1].ema_alpha"] {
        assert!(err.contains(field), "missing {field} in:\n{err}");
    }
}

#[test]
fn validate_accepts_the_default_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = driftfed(&["validate", "--desk"], dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("valid"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "epochs = 3\n").unwrap();
    let out = driftfed(&["validate", "--config", "c.toml"], dir.path());
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("epochs"));
}

#[test]
fn gen_data_writes_csv_and_column_spec() {
    let dir = tempfile::tempdir().unwrap();
    let out = driftfed(
        &["gen-data", "--out", "flows.csv", "--seed", "3", "--columns", "cols.toml"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("flows.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header.split(',').count(), 46);
    assert_eq!(csv.lines().count(), 1 + 18 * 1200);
    assert!(dir.path().join("cols.toml").is_file());
}

#[test]
fn run_then_report_reproduces_tables() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        r#"
tasks = ["binary"]

[[strategies]]
kind = "static"

[[strategies]]
kind = "simple"

[fed]
rounds = 1
num_clients = 2

[fed.train]
local_epochs = 1
"#,
    )
    .unwrap();
    let out = driftfed(
        &["run", "--config", "run.toml", "--desk", "--seed", "4", "--out", "o", "--strategy", "simple"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    let acc = fs::read_to_string(dir.path().join("o/binary/accuracy.csv")).unwrap();
    assert_eq!(acc.lines().count(), 2);
    assert!(acc.lines().nth(1).unwrap().starts_with("simple,"));
    let manifest = fs::read_to_string(dir.path().join("o/manifest.json")).unwrap();
    assert!(manifest.contains("\"status\": \"complete\""));

    let out = driftfed(&["report", "--from", "o", "--to", "r"], dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert_eq!(acc, fs::read_to_string(dir.path().join("r/binary/accuracy.csv")).unwrap());

    // A manifest doubles as a config for reruns.
    let out = driftfed(&["run", "--config", "o/manifest.json", "--out", "o2"], dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert_eq!(acc, fs::read_to_string(dir.path().join("o2/binary/accuracy.csv")).unwrap());
}

#[test]
fn output_dir_defaults_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "tasks = [\"binary\"]\n[[strategies]]\nkind = \"static\"\n[fed]\nrounds = 1\n[fed.train]\nlocal_epochs = 1\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_driftfed"))
        .args(["run", "--config", "run.toml", "--desk"])
        .current_dir(dir.path())
        .env("DRIFTFED_OUT", "from-env")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(dir.path().join("from-env/binary/accuracy.csv").is_file());
}

#[test]
fn unknown_strategy_filter_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = driftfed(&["run", "--desk", "--strategy", "nope", "--out", "o"], dir.path());
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("nope"));
}

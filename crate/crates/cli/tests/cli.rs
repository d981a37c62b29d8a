//! The `pgpe` binary as a process: exit codes, files, schemas.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pgpe(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pgpe"))
        .args(args)
        .current_dir(cwd)
        .env_remove("PGPE_OUT_DIR")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("exp.toml");
    fs::write(&path, body).unwrap();
    path
}

fn only_run_dir(out: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.into_iter().next().unwrap()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn list_methods_prints_seven_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = pgpe(&["list-methods"], tmp.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert!(text.contains("iw-pgpe-ob") && text.contains("iw_truncated"));
    assert_eq!(
        text,
        String::from_utf8(pgpe(&["list-methods"], tmp.path()).stdout).unwrap()
    );
}

#[test]
fn missing_environment_exits_2_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "command = \"train\"\n");
    let out = pgpe(&["run", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("environment"));
    let out = pgpe(&["validate", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_value_and_unknown_key_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "command = \"train\"\nenvironment = \"toy\"\ngamma = 1.5\n",
    );
    let out = pgpe(&["validate", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));
    let out = pgpe(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "gamma=0.5",
            "--set",
            "colour=1",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn train_writes_returns_path_config_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "command = \"train\"\nenvironment = \"toy\"\niterations = 3\nseeds = 2\ntest_episodes = 5\n",
    );
    let out = pgpe(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            "o",
            "--seed",
            "5",
            "--threads",
            "2",
        ],
        tmp.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = only_run_dir(&tmp.path().join("o"));
    assert!(run
        .file_name()
        .unwrap()
        .to_str()
        .unwrap()
        .starts_with("train-"));
    assert!(run.file_name().unwrap().to_str().unwrap().ends_with("-s5"));
    assert_eq!(
        header(&run.join("returns.csv")),
        "iteration,method,seed,mean_return,se"
    );
    assert_eq!(
        header(&run.join("path.csv")),
        "iteration,method,seed,eta_1,tau_1"
    );
    let resolved = fs::read_to_string(run.join("config.resolved.toml")).unwrap();
    assert!(resolved.contains("seed = 5"));
    let manifest = pgpe_cli::output::read_manifest(&run).unwrap();
    assert_eq!(manifest["schema_version"], 1);
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["partial"], false);
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["threads"], 2);
}

#[test]
fn gradient_study_and_bounds_schemas() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "command = \"bounds-check\"\nenvironment = \"toy\"\niterations = 2\ntrials = 10\noracle_samples = 1000\ntau_block = true\n",
    );
    let out = pgpe(
        &["run", "--config", cfg.to_str().unwrap(), "--out", "o"],
        tmp.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = only_run_dir(&tmp.path().join("o"));
    assert_eq!(
        header(&run.join("var_bias.csv")),
        "iteration,method,var,bias2,mse,w_max"
    );
    assert_eq!(
        header(&run.join("var_bias_tau.csv")),
        "iteration,method,var,bias2,mse,w_max"
    );
    assert_eq!(
        header(&run.join("bounds.csv")),
        "iteration,block,empirical_var,bound,pass,check,method"
    );
    assert_eq!(
        fs::read_to_string(run.join("var_bias.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 2 * 6
    );
}

#[test]
fn angle_study_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "command = \"angle-study\"\nenvironment = \"toy\"\ntrials = 3\n",
    );
    let out = pgpe(
        &["run", "--config", cfg.to_str().unwrap(), "--out", "o"],
        tmp.path(),
    );
    assert!(out.status.success());
    let run = only_run_dir(&tmp.path().join("o"));
    assert_eq!(header(&run.join("angles.csv")), "trial,method,angle_deg");
}

#[test]
fn output_dir_env_var_is_honored_below_the_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "command = \"eval\"\nenvironment = \"mountain-car\"\nseeds = 1\ntest_episodes = 2\noutput_dir = \"from-file\"\n",
    );
    let out = Command::new(env!("CARGO_BIN_EXE_pgpe"))
        .args(["run", "--config", cfg.to_str().unwrap()])
        .current_dir(tmp.path())
        .env("PGPE_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("from-env").is_dir());
    assert!(!tmp.path().join("from-file").exists());
    let out = pgpe(&["run", "--config", cfg.to_str().unwrap()], tmp.path());
    assert!(out.status.success());
    assert!(tmp.path().join("from-file").is_dir());
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("blocker"), "file, not a directory").unwrap();
    let cfg = write_config(
        tmp.path(),
        "command = \"eval\"\nenvironment = \"toy\"\nseeds = 1\n",
    );
    let out = pgpe(
        &["run", "--config", cfg.to_str().unwrap(), "--out", "blocker"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

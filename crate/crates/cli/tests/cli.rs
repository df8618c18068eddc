use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_smm-servo"));
    c.env("RUST_LOG", "warn");
    c
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn write_pgm(path: &Path, w: usize, h: usize) {
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend((0..w * h).map(|i| ((i * 37) % 256) as u8));
    fs::write(path, bytes).unwrap();
}

#[test]
fn unknown_subcommand_prints_usage() {
    let out = bin().arg("fly").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn smm_writes_csv_grid() {
    let dir = tempfile::tempdir().unwrap();
    write_pgm(&dir.path().join("img.pgm"), 12, 9);
    let out = run_in(dir.path(), &["smm", "--input", "img.pgm", "--output", "s.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 9);
    for r in rows {
        let vals: Vec<f64> = r.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals.len(), 12);
        assert!(vals.iter().all(|v| *v > 0.0 && v.is_finite()));
    }
}

#[test]
fn run_at_goal_exits_immediately() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "output_dir = \"res\"\n").unwrap();
    let out = run_in(dir.path(), &["run", "--config", "c.toml"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(dir.path().join("res/report.csv")).unwrap();
    assert!(report.lines().nth(1).unwrap().starts_with("run,converged,0,"));
    assert!(dir.path().join("res/run/trace.csv").is_file());
}

#[test]
fn rerun_overwrites_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "initial = [0.04, -0.03, -0.5, 0.0, 0.0, 3.0]\ndof_mask = \"110001\"\n";
    fs::write(dir.path().join("c.toml"), cfg).unwrap();
    let trace = dir.path().join("out/run/trace.csv");
    assert!(run_in(dir.path(), &["run", "--config", "c.toml"]).status.success());
    let first = fs::read(&trace).unwrap();
    assert!(run_in(dir.path(), &["run", "--config", "c.toml"]).status.success());
    assert_eq!(first, fs::read(&trace).unwrap());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("smm.sigma_min = 1.0\n", "pole"),
        ("controller.lambda = -1\n", "lambda"),
        ("colour = 3\n", "colour"),
    ];
    for (i, (cfg, needle)) in cases.iter().enumerate() {
        let name = format!("c{i}.toml");
        fs::write(dir.path().join(&name), cfg).unwrap();
        let out = run_in(dir.path(), &["run", "--config", &name]);
        assert_eq!(out.status.code(), Some(2), "{cfg}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(needle), "{cfg}: {err}");
    }
    let out = run_in(dir.path(), &["run", "--config", "missing.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "").unwrap();
    let out = bin()
        .current_dir(dir.path())
        .env("SMM_SERVO_THREADS", "many")
        .args(["run", "--config", "c.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn table1_creates_case_directories_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .current_dir(dir.path())
        .env("SMM_SERVO_THREADS", "2")
        .arg("table1")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let root = dir.path().join("out/table1");
    for i in 1..=5 {
        assert!(root.join(format!("table1_exp{i}/trace.csv")).is_file());
    }
    let report = fs::read_to_string(root.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 6);
    let entries = fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(entries, 1, "nothing written outside the output directory");
}

use std::fs;
use std::process::{Command, Output};

use vortexed::cli::config_from_csv;
use vortexed::scanner::SWEEP_HEADER;

fn vortexed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vortexed"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn convert_g_prints_coupling() {
    let out = vortexed(&["convert-g", "--scattering-length", "0.0997", "--axial-length", "1"]);
    assert!(out.status.success());
    let g: f64 = stdout(&out).trim().parse().unwrap();
    assert!((g - 0.499_822).abs() < 1e-6);
}

#[test]
fn negative_scattering_length_is_rejected() {
    let out = vortexed(&["convert-g", "--scattering-length", "-1", "--axial-length", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    fs::write(&path, "# small run\nn = 4\ng = 0.9\nomega_steps = 3\n").unwrap();
    let out = vortexed(&["sweep", "--config", path.to_str().unwrap(), "--g", "0.5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let cfg = config_from_csv(&text).unwrap();
    assert_eq!(cfg.g, Some(0.5));
    assert_eq!(cfg.n, Some(4));
    assert_eq!(cfg.omega_steps, Some(3));
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, SWEEP_HEADER.join(","));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 4);
}

#[test]
fn embedded_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let args = [
        "sweep",
        "--n",
        "4",
        "--g",
        "0.5",
        "--n-ll",
        "2",
        "--omega-steps",
        "4",
        "--out-dir",
    ];
    let first = vortexed(&[&args[..], &[out.to_str().unwrap()]].concat());
    assert!(first.status.success());
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let echo: String = config_from_csv(&csv).unwrap().to_text();
    let cfg_path = dir.path().join("echo.cfg");
    fs::write(&cfg_path, echo).unwrap();
    fs::remove_file(out.join("sweep.csv")).unwrap();
    let second = vortexed(&["sweep", "--config", cfg_path.to_str().unwrap()]);
    assert!(second.status.success());
    assert_eq!(fs::read_to_string(out.join("sweep.csv")).unwrap(), csv);
}

#[test]
fn unknown_config_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    fs::write(&path, "n = 4\ng = 0.5\nomgea = 0.8\n").unwrap();
    let out = vortexed(&["ground-state", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("omgea"));
}

#[test]
fn omega_conflicts_with_range() {
    let out = vortexed(&["sweep", "--n", "4", "--g", "0.5", "--omega", "0.8", "--omega-lo", "0.6"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ground_state_json_has_config_and_energies() {
    let out = vortexed(&["ground-state", "--n", "4", "--g", "0.5", "--omega", "0.7"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(v["config"].as_str().unwrap().contains("omega = 0.7"));
    assert_eq!(v["energies"].as_array().unwrap().len(), 4);
    assert_eq!(v["converged"], true);
}

#[test]
fn basis_info_lists_states_by_block() {
    let out = vortexed(&["basis-info", "--n", "2", "--l-max", "2", "--sector", "all", "--list"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("dimension 4\n"));
    let listed: Vec<&str> = text.lines().filter(|l| l.starts_with("L=")).collect();
    assert_eq!(listed.len(), 4);
    assert_eq!(listed.iter().filter(|l| l.starts_with("L=2 |")).count(), 2);
}

#[test]
fn oversized_basis_is_refused() {
    let out = vortexed(&["basis-info", "--n", "12", "--n-ll", "2", "--basis-cap", "100"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn missing_crossing_has_its_own_exit_code() {
    let out = vortexed(&[
        "critical",
        "--n",
        "4",
        "--g",
        "0.5",
        "--omega-lo",
        "0.3",
        "--omega-hi",
        "0.4",
        "--omega-steps",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(7));
}

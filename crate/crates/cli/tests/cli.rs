//! End-to-end checks of the binary: exit codes, artifacts, determinism, and
//! the solve -> certify round trip.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pqground"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn run_solve(cfg: &str, out: &Path) -> Output {
    bin()
        .args(["solve", "--config"])
        .arg(config(cfg))
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .output()
        .expect("binary runs")
}

#[test]
fn solve_existence_case_exits_zero_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_solve("bi_k2_alpha7.toml", dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    for name in ["profile.json", "profile.csv", "certificate.json", "scan.csv", "assumptions.json"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let cert: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("certificate.json")).unwrap())
            .unwrap();
    assert_eq!(cert["pass"], serde_json::Value::Bool(true));
}

#[test]
fn solve_nonexistence_case_exits_two_with_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_solve("bi_k2_alpha6.toml", dir.path());
    assert_eq!(
        out.status.code(),
        Some(2),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("scan.csv").exists());
    let cert: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("nonexistence.json")).unwrap())
            .unwrap();
    assert_eq!(cert["certified"], serde_json::Value::Bool(true));
    assert!(!dir.path().join("profile.json").exists());
}

#[test]
fn malformed_config_exits_one_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[operator]\nkind = \n").unwrap();
    let out = bin()
        .args(["solve", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line"), "diagnostic lacks location: {err}");
}

#[test]
fn certify_round_trip_and_perturbation() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_solve("classical_soliton.toml", dir.path());
    assert_eq!(out.status.code(), Some(0));
    let profile_path = dir.path().join("profile.json");
    let solve_cert: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("certificate.json")).unwrap())
            .unwrap();

    // Re-certify the stored profile: exit 0 and residuals reproduced.
    let recheck_dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["certify", "--config"])
        .arg(config("classical_soliton.toml"))
        .arg("--profile")
        .arg(&profile_path)
        .arg("--out")
        .arg(recheck_dir.path())
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let recheck_cert: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(recheck_dir.path().join("certificate.json")).unwrap(),
    )
    .unwrap();
    for key in ["pohozaev_residual", "nehari_residual", "action_relation_residual"] {
        let a = solve_cert[key].as_f64().unwrap();
        let b = recheck_cert[key].as_f64().unwrap();
        assert!(
            (a - b).abs() <= 1e-12 * (1.0 + a.abs()),
            "{key}: {a} vs {b}"
        );
    }

    // Perturb the stored profile over 1 <= r <= 4 (where it carries real
    // volume): certification must fail with exit 3.
    let mut record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&profile_path).unwrap()).unwrap();
    let radii: Vec<f64> = record["r"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let u = record["u"].as_array_mut().unwrap();
    for (i, v) in u.iter_mut().enumerate() {
        if radii[i] >= 1.0 && radii[i] <= 4.0 {
            let x = v.as_f64().unwrap();
            *v = serde_json::json!(x + 0.2);
        }
    }
    let perturbed_path = dir.path().join("perturbed.json");
    fs::write(&perturbed_path, serde_json::to_string(&record).unwrap()).unwrap();
    let out = bin()
        .args(["certify", "--config"])
        .arg(config("classical_soliton.toml"))
        .arg("--profile")
        .arg(&perturbed_path)
        .arg("--out")
        .arg(recheck_dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    // Missing file is a usage error.
    let out = bin()
        .args(["certify", "--config"])
        .arg(config("classical_soliton.toml"))
        .arg("--profile")
        .arg(dir.path().join("nope.json"))
        .arg("--out")
        .arg(recheck_dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn certify_rejects_mismatched_problem() {
    // A profile solved under one problem cannot be certified against another.
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_solve("classical_soliton.toml", dir.path()).status.code(), Some(0));
    let out = bin()
        .args(["certify", "--config"])
        .arg(config("bi_k2_alpha7.toml"))
        .arg("--profile")
        .arg(dir.path().join("profile.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not match"));
}

#[test]
fn solve_outputs_are_deterministic() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    assert_eq!(run_solve("classical_soliton.toml", dir_a.path()).status.code(), Some(0));
    assert_eq!(run_solve("classical_soliton.toml", dir_b.path()).status.code(), Some(0));
    for name in ["profile.json", "certificate.json", "scan.csv", "profile.csv"] {
        let a = fs::read(dir_a.path().join(name)).unwrap();
        let b = fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn coeffs_prints_chain_and_reference() {
    let out = bin().args(["coeffs", "--k", "3", "--beta", "1.0"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("1.5000000000000000e0"), "{text}");
    let out = bin().args(["coeffs", "--k", "1"]).output().unwrap();
    assert!(String::from_utf8_lossy(&out.stdout).contains("1, 1.0"));
}

#[test]
fn sweep_runs_cells_and_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    // Shrink the sweep problem for test runtime: two chain orders.
    let text = fs::read_to_string(config("sweep_chain.toml"))
        .unwrap()
        .replace("k = [2, 3, 4]", "k = [2, 3]")
        .replace("resolution = 4096", "resolution = 1024")
        .replace("scan_count = 60", "scan_count = 24");
    let cfg = dir.path().join("sweep.toml");
    fs::write(&cfg, text).unwrap();
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .args(["--workers", "2", "--quiet"])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    let table = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3, "{table}");
    assert!(lines[1].contains("decay") && lines[1].contains("true"), "{table}");
    assert!(lines[2].contains("decay") && lines[2].contains("true"), "{table}");
}

#[test]
fn sweep_with_nonexistent_cell_flags_row_and_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("bi_k2_alpha7.toml"))
        .unwrap()
        .replace("r_max = 800.0", "r_max = 200.0")
        .replace("resolution = 4096", "resolution = 1024")
        + "\n[sweep]\nalpha = [7.0, 6.0]\n";
    let cfg = dir.path().join("mixed.toml");
    fs::write(&cfg, text).unwrap();
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .args(["--workers", "2", "--quiet"])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(2),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    let table = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3, "{table}");
    assert!(lines[1].starts_with('7') && lines[1].contains("decay"), "{table}");
    assert!(lines[2].starts_with('6') && lines[2].contains("no_bracket"), "{table}");
}

#[test]
fn empty_sweep_range_writes_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("sweep_chain.toml"))
        .unwrap()
        .replace("k = [2, 3, 4]", "k = []");
    let cfg = dir.path().join("sweep.toml");
    fs::write(&cfg, text).unwrap();
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .arg("--quiet")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let table = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 1);
}

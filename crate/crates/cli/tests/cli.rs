//! End-to-end tests of the `instanton` binary: exit-code contract, run
//! directory layout, reproducibility, and round trips through the
//! snapshot format.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_instanton"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("instanton-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(dir: &std::path::Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const TAUB_NUT_CFG: &str = r#"
[rod]
corners = [0.0]
vectors = [[0, 1], [1, 0]]

[asymptotics]
class = "alf"
nut = 1.0

[solver]
n_rho = 96
n_z = 192
tol = 1e-5
max_sweeps = 6000
big_r = 40.0
"#;

const TAUB_BOLT_CFG: &str = r#"
[rod]
corners = [0.0, 1.5]
vectors = [[0, 1], [1, 0], [1, 1]]

[asymptotics]
class = "alf"
nut = 1.0

[solver]
n_rho = 48
n_z = 96
tol = 1e-4
max_sweeps = 5000
"#;

#[test]
fn validate_taub_bolt_is_admissible() {
    let dir = scratch("validate-ok");
    let cfg = write(&dir, "cfg.toml", TAUB_BOLT_CFG);
    let out = bin().arg("validate").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("L(1, 0)"), "{text}");
    assert!(text.contains("verdict: admissible"), "{text}");
}

#[test]
fn validate_nonprimitive_vector_is_a_domain_verdict() {
    let dir = scratch("validate-bad");
    let cfg = write(
        &dir,
        "cfg.toml",
        "[rod]\ncorners = [0.0]\nvectors = [[0, 1], [2, 0]]\n",
    );
    let out = bin().arg("validate").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1), "{out:?}");
}

#[test]
fn validate_inadmissible_junction_is_a_domain_verdict() {
    let dir = scratch("validate-junction");
    let cfg = write(
        &dir,
        "cfg.toml",
        "[rod]\ncorners = [0.0, 1.0]\nvectors = [[0, 1], [1, 0], [1, 2]]\n",
    );
    let out = bin().arg("validate").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1), "{out:?}");
    assert!(stdout(&out).contains("not admissible"));
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = scratch("validate-malformed");
    let cfg = write(&dir, "cfg.toml", "[rod]\ncorners = [0.0, \"x\"]\n");
    let out = bin().arg("validate").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    let missing = bin().arg("validate").arg("--config").arg(dir.join("nope.toml")).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn modelmap_runs_are_bitwise_reproducible() {
    let dir = scratch("modelmap-repro");
    let cfg = write(&dir, "cfg.toml", TAUB_BOLT_CFG);
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    for out in [&out_a, &out_b] {
        let r = bin()
            .arg("modelmap")
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        assert_eq!(r.status.code(), Some(0), "{r:?}");
    }
    let sub = std::fs::read_dir(&out_a).unwrap().next().unwrap().unwrap().file_name();
    for name in ["modelmap.snap", "manifest.toml", "config.resolved.toml"] {
        let a = std::fs::read(out_a.join(&sub).join(name)).unwrap();
        let b = std::fs::read(out_b.join(&sub).join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn solve_then_diagnose_taub_nut_recovers_mass_over_nut() {
    let dir = scratch("solve-tn");
    let cfg = write(&dir, "cfg.toml", TAUB_NUT_CFG);
    let runs = dir.join("runs");
    let out = bin()
        .arg("solve")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&runs)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let sub = std::fs::read_dir(&runs).unwrap().next().unwrap().unwrap().path();
    let snap = sub.join("solution.snap");
    assert!(snap.exists());
    assert!(sub.join("report.toml").exists());
    assert!(sub.join("manifest.toml").exists());

    let diag = bin()
        .arg("diagnose")
        .arg("--snapshot")
        .arg(&snap)
        .arg("--config")
        .arg(&cfg)
        .arg("--fit-alf")
        .arg("--rods")
        .output()
        .unwrap();
    assert_eq!(diag.status.code(), Some(0), "{diag:?}");
    let text = stdout(&diag);
    let m_over_n = grab(&text, "mass_over_nut = ");
    assert!(
        (m_over_n - 0.5).abs() < 0.05,
        "mass/nut = {m_over_n}, want 0.5: {text}"
    );
    assert!(text.contains("vectors = [[0, 1], [1, 0]]"), "{text}");
}

#[test]
fn diagnose_rejects_snapshot_from_a_different_config() {
    let dir = scratch("diag-mismatch");
    let cfg = write(&dir, "cfg.toml", TAUB_NUT_CFG);
    let other = write(&dir, "other.toml", TAUB_BOLT_CFG);
    let runs = dir.join("runs");
    let out = bin()
        .arg("modelmap")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&runs)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let sub = std::fs::read_dir(&runs).unwrap().next().unwrap().unwrap().path();
    let diag = bin()
        .arg("diagnose")
        .arg("--snapshot")
        .arg(sub.join("modelmap.snap"))
        .arg("--config")
        .arg(&other)
        .arg("--rods")
        .output()
        .unwrap();
    assert_eq!(diag.status.code(), Some(2), "{diag:?}");
}

#[test]
fn gibbons_hawking_oracle_has_the_expected_rods() {
    let dir = scratch("oracle-gh");
    let snap = dir.join("gh.snap");
    let out = bin()
        .args(["oracle", "gibbons-hawking", "--centers", "2", "--c", "0.0"])
        .args(["--n-rho", "64", "--n-z", "128"])
        .arg("--out")
        .arg(&snap)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let diag = bin()
        .arg("diagnose")
        .arg("--snapshot")
        .arg(&snap)
        .arg("--rods")
        .output()
        .unwrap();
    assert_eq!(diag.status.code(), Some(0), "{diag:?}");
    let text = stdout(&diag);
    assert!(text.contains("vectors = [[0, 1], [1, 0], [2, 1]]"), "{text}");
}

#[test]
fn unknown_oracle_is_a_usage_error() {
    let out = bin().args(["oracle", "eguchi"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn export_emits_tables() {
    let dir = scratch("export");
    let snap = dir.join("tn.snap");
    let out = bin()
        .args(["oracle", "taub-nut", "--nut", "1.0", "--n-rho", "32", "--n-z", "64"])
        .arg("--out")
        .arg(&snap)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    for (what, header) in [
        ("ray", "r,rho,z,g11,g12,g22"),
        ("rod", "z,lambda_small_over_large,kernel_angle"),
        ("grid", "j,k,rho,z,g11,g12,g22,nu"),
    ] {
        let exp = bin()
            .arg("export")
            .arg("--snapshot")
            .arg(&snap)
            .args(["--what", what])
            .output()
            .unwrap();
        assert_eq!(exp.status.code(), Some(0), "{exp:?}");
        let text = stdout(&exp);
        assert!(text.starts_with(header), "{what}: {}", &text[..80.min(text.len())]);
        assert!(text.lines().count() > 10);
    }
    let bad = bin()
        .arg("export")
        .arg("--snapshot")
        .arg(&snap)
        .args(["--what", "surface"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn solve_with_oracle_comparison_reports_small_mazur_distance() {
    let dir = scratch("solve-compare");
    let cfg = write(&dir, "cfg.toml", TAUB_BOLT_CFG);
    let runs = dir.join("runs");
    let out = bin()
        .arg("solve")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&runs)
        .args(["--compare-oracle", "taub-bolt"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let sub = std::fs::read_dir(&runs).unwrap().next().unwrap().unwrap().path();
    let report = std::fs::read_to_string(sub.join("report.toml")).unwrap();
    let margin = grab(&report, "mazur_sup_margin = ");
    assert!(
        margin < 0.1,
        "Mazur distance to the closed form should be small away from the axis, got {margin}"
    );
}

/// Pulls the float following `key` out of a report.
fn grab(text: &str, key: &str) -> f64 {
    let start = text.find(key).unwrap_or_else(|| panic!("missing {key} in {text}")) + key.len();
    let rest = &text[start..];
    let end = rest.find(['\n', ' ']).unwrap_or(rest.len());
    rest[..end].parse().unwrap()
}

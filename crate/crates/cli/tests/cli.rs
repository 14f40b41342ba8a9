use std::path::Path;
use std::process::{Command, Output};

use rgflow::diagnostics::direct_solve;
use rgflow::nonlinear::{EvolutionConfig, Nonlinearity};
use rgflow::space::make_gp;
use rgflow::{KernelSpec, SpaceConfig, TimeScale};
use serde_json::Value;
use tempfile::TempDir;

const SMALL: [&str; 3] = ["n=513", "omega_max=16", "interp=\"spectral\""];

fn rgflow(dir: &Path, args: &[&str], overrides: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rgflow"));
    cmd.args(args).arg("--out").arg(dir);
    for o in overrides {
        cmd.arg("--override").arg(o);
    }
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn burgers<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut v: Vec<&str> = SMALL.to_vec();
    v.extend(["lambda=1", "amplitude=0.01"]);
    v.extend(extra);
    v
}

#[test]
fn constants_scenario_emits_ledger() {
    let tmp = TempDir::new().unwrap();
    let out = rgflow(tmp.path(), &["--scenario", "constants"], &SMALL, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(tmp.path());
    let theory: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("constants.json")).unwrap()).unwrap();
    assert_eq!(theory, m["results"]["theory"]);
    assert_eq!(theory["c_q"], 0.5);
    let sigma = theory["sigma"].as_f64().unwrap();
    assert!(theory["epsilon_bar"].as_f64().unwrap() <= sigma);
    for key in m["results"].as_object().unwrap().keys() {
        assert!(m["schema"].get(key).is_some(), "result '{key}' has no schema entry");
    }
    for file in m["artifacts"].as_array().unwrap() {
        assert!(m["schema"].get(format!("file:{}", file.as_str().unwrap())).is_some());
    }
}

#[test]
fn run_rg_prefactor_matches_direct_solve() {
    let tmp = TempDir::new().unwrap();
    let out = rgflow(tmp.path(), &["--scenario", "run-rg"], &burgers(&["n_max=2", "nt=65"]), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(tmp.path());
    let a_limit = m["results"]["a_limit"].as_f64().unwrap();
    let a0 = m["results"]["records"][0]["a_n"].as_f64().unwrap();

    // Oracle: the prefactor of the unrenormalized solution at T = L².
    let space = SpaceConfig { n: 513, omega_max: 16.0, interp: rgflow::Interp::Spectral, ..SpaceConfig::default() };
    let kernel = KernelSpec::gauss();
    let ts = TimeScale::pure_power(0.0).unwrap();
    let f0 = make_gp(&kernel, 0.0, space).scale(0.01);
    let evo = EvolutionConfig { nt: 65, ..EvolutionConfig::default() };
    let u = direct_solve(&f0, 1.0, &Nonlinearity::burgers(), &kernel, &ts, 16.0, &evo).unwrap();
    let a_direct = u.moments().prefactor;
    assert!(a_limit != a0);
    assert!((a_limit - a_direct).abs() < 1e-2 * (a_limit - a0).abs(), "{a_limit} vs {a_direct} (A_0 = {a0})");
    for f in ["rates.csv", "profile.csv", "final_state.csv"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
}

#[test]
fn compare_reports_oracle_coherence() {
    let tmp = TempDir::new().unwrap();
    let out = rgflow(
        tmp.path(),
        &["--scenario", "compare"],
        &[SMALL[0], SMALL[1], SMALL[2], "lambda=1", "amplitude=0.1", "perturbation=0.05", "n_max=2", "nt=65"],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rel = manifest(tmp.path())["results"]["relative_error"].as_f64().unwrap();
    assert!(rel > 0.0 && rel < 1e-3, "{rel}");
}

#[test]
fn outputs_are_deterministic_across_runs_and_thread_counts() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = ["--scenario", "run-rg"];
    let ov = burgers(&["n_max=3"]);
    assert!(rgflow(a.path(), &args, &ov, &[]).status.success());
    assert!(rgflow(b.path(), &args, &ov, &[("RGFLOW_THREADS", "1")]).status.success());
    for f in ["rates.csv", "profile.csv", "final_state.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let (mut ma, mut mb) = (manifest(a.path()), manifest(b.path()));
    // The output directory is part of the config; everything else must match.
    ma["config"]["out"] = Value::Null;
    mb["config"]["out"] = Value::Null;
    assert_eq!(ma, mb);
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let out = rgflow(tmp.path(), &["--scenario", "run-rg"], &["q=1.2", "lambda=1"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("q > 3/2"));
    assert_eq!(manifest(tmp.path())["status"], "failed");

    let out = rgflow(tmp.path(), &["--scenario", "run-rg"], &burgers(&["amplitude=50", "n_max=1"]), &[]);
    assert_eq!(out.status.code(), Some(2), "divergence is a smallness violation");

    let out = rgflow(tmp.path(), &["--scenario", "run-rg"], &burgers(&["picard_max=1", "n_max=1"]), &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(manifest(tmp.path())["exit_code"], 3);

    let out = rgflow(tmp.path(), &["--scenario", "run-rg"], &["bogus=1"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let out = rgflow(tmp.path(), &["--scenario", "constants"], &[], &[("RGFLOW_THREADS", "0")]);
    assert_eq!(out.status.code(), Some(2));

    let out = rgflow(tmp.path(), &["--scenario", "no-such-scenario"], &[], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_parsing() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("cfg.json");
    std::fs::write(&path, r#"{"scenario": "validate-kernel", "scale": 4, "scale": 8}"#).unwrap();
    let out = rgflow(tmp.path(), &["--config", path.to_str().unwrap()], &[], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate"));

    std::fs::write(&path, r#"{"scenario": "validate-kernel", "kernel": "quartic"}"#).unwrap();
    let out = rgflow(tmp.path(), &["--config", path.to_str().unwrap(), "--print-config"], &["q=3"], &[]);
    assert!(out.status.success());
    let canonical = String::from_utf8(out.stdout).unwrap();
    let round = tmp.path().join("canonical.json");
    std::fs::write(&round, &canonical).unwrap();
    let again = rgflow(tmp.path(), &["--config", round.to_str().unwrap(), "--print-config"], &[], &[]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), canonical);
    assert!(canonical.contains("\"kernel\": \"quartic\"") && canonical.contains("\"q\": 3.0"));

    let out = rgflow(tmp.path(), &["--config", round.to_str().unwrap()], &[], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(manifest(tmp.path())["results"]["passed"], true);
}

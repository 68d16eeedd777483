use std::path::Path;
use std::process::{Command, Output};

use spiked::manifest::RunManifest;

fn spiked(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spiked"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("SPIKED_OUT_DIR")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const SMALL_GD: &[&str] = &[
    "sim", "--algo", "gd", "--beta", "inf", "--n", "12", "--seeds", "3", "--t-max", "1", "--dt", "0.01",
];

#[test]
fn gradient_flow_accepts_infinite_beta() {
    let dir = tempfile::tempdir().unwrap();
    let o = spiked(dir.path(), SMALL_GD);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("sim_d3_1.5.csv").exists());
}

#[test]
fn langevin_rejects_infinite_beta() {
    let dir = tempfile::tempdir().unwrap();
    let o = spiked(dir.path(), &["sim", "--algo", "langevin", "--beta", "inf"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("finite --beta"));
}

#[test]
fn gradient_flow_with_finite_beta_warns() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = SMALL_GD.to_vec();
    args[4] = "2";
    let o = spiked(dir.path(), &args);
    assert_eq!(code(&o), 0);
    let m = RunManifest::read(&dir.path().join("manifest.json")).unwrap();
    assert!(m.warnings.iter().any(|w| w.contains("ignores beta")));
}

#[test]
fn reruns_reproduce_output_digests() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["sim", "--n", "10", "--seeds", "2", "--t-max", "0.5", "--dt", "0.01"];
    assert_eq!(code(&spiked(a.path(), &args)), 0);
    assert_eq!(code(&spiked(b.path(), &args)), 0);
    let (ma, mb) = (RunManifest::read(&a.path().join("manifest.json")).unwrap(), RunManifest::read(&b.path().join("manifest.json")).unwrap());
    let digests = |m: &RunManifest| m.outputs.iter().map(|o| (o.path.clone(), o.sha256.clone())).collect::<Vec<_>>();
    assert_eq!(digests(&ma), digests(&mb));
    assert!(ma.verify(a.path()).unwrap().is_empty());
}

#[test]
fn unknown_method_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = spiked(dir.path(), &["threshold", "--method", "foo"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[dmft]\nbogus = 1\n").unwrap();
    let o = spiked(dir.path(), &["--config", cfg.to_str().unwrap(), "dmft", "--t-max", "1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn config_values_apply_and_flags_override_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[dmft]\nt-max = 1.0\nh = 0.1\nm0 = 0.25\n").unwrap();
    let o = spiked(dir.path(), &["--config", cfg.to_str().unwrap(), "dmft", "--h", "0.05"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = RunManifest::read(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(m.settings["t_max"], 1.0);
    assert_eq!(m.settings["h"], 0.05);
    assert_eq!(m.settings["m0"], 0.25);
}

#[test]
fn free_case_dmft_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = spiked(
        dir.path(),
        &["dmft", "--delta2", "inf", "--delta3", "inf", "--beta", "1", "--h", "0.01", "--t-max", "5", "--m0", "0.5", "--slices", "0,2"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rd = csv::Reader::from_path(dir.path().join("dmft_series.csv")).unwrap();
    for rec in rd.records() {
        let r = rec.unwrap();
        let (t, m): (f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap());
        assert!((m - 0.5 * (-t).exp()).abs() <= 1e-3, "t={t}");
    }
    let mut rd = csv::Reader::from_path(dir.path().join("dmft_slices.csv")).unwrap();
    for rec in rd.records() {
        let r = rec.unwrap();
        let v: Vec<f64> = (0..4).map(|i| r[i].parse().unwrap()).collect();
        let e = (-(v[0] - v[1])).exp();
        assert!((v[2] - e).abs() <= 1e-3 && (v[3] - e).abs() <= 1e-3);
    }
}

#[test]
fn zero_seed_overlap_warns() {
    let dir = tempfile::tempdir().unwrap();
    let o = spiked(dir.path(), &["dmft", "--m0", "0", "--t-max", "1"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("m0 = 0"));
}

#[test]
fn invalid_variance_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&spiked(dir.path(), &["dmft", "--delta2", "0"])), 2);
}

#[test]
fn empty_phase_range_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&spiked(dir.path(), &["phase", "--delta2-range", "1:0.5:0.1"])), 2);
}

#[test]
fn phase_pack_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let o = spiked(dir.path(), &["phase", "--delta2-range", "0.1:0.9:0.4", "--delta3-range", "0.5:1.5:0.5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("phase_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["ordering"]["ordered"], true);
    let phases = std::fs::read_to_string(dir.path().join("phase.csv")).unwrap();
    assert_eq!(phases.lines().count(), 1 + 3 * 3);
}

#[test]
fn analytic_threshold_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = spiked(dir.path(), &["threshold", "--method", "analytic", "--delta2", "0.5", "--beta", "inf"]);
    assert_eq!(code(&o), 0);
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("threshold_report.json")).unwrap()).unwrap();
    assert!((r["analytic"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(r["beta"], "inf");
}

#[test]
fn instance_dump_inspects() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&spiked(dir.path(), &["instance", "--n", "8", "--seed", "5"])), 0);
    let path = dir.path().join("instance.bin");
    let o = spiked(dir.path(), &["instance", "--inspect", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let info: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(info["n"], 8);
    assert_eq!(info["seed"], 5);
}

#[test]
fn amp_runs_write_iteration_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = spiked(
        dir.path(),
        &["sim", "--algo", "amp", "--n", "40", "--seeds", "2", "--delta2", "0.3", "--amp-init", "informed", "--amp-m0", "0.2"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(dir.path().join("amp_d3_1.5.csv")).unwrap();
    assert!(table.starts_with("iter,m,residual"));
}

#[test]
fn rerun_reproduces_a_manifest() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let o = spiked(a.path(), &["dmft", "--beta", "inf", "--t-max", "2", "--h", "0.05"]);
    assert_eq!(code(&o), 0);
    let manifest = a.path().join("manifest.json");
    let o = spiked(b.path(), &["rerun", manifest.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = RunManifest::read(&b.path().join("manifest.json")).unwrap();
    assert_eq!(m.settings["beta"], "inf");
}

#[test]
fn rerun_detects_changed_outputs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(code(&spiked(a.path(), &["instance", "--n", "6"])), 0);
    let path = a.path().join("manifest.json");
    let mut m = RunManifest::read(&path).unwrap();
    m.outputs[0].sha256 = "0".repeat(64);
    std::fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
    assert_eq!(code(&spiked(b.path(), &["rerun", path.to_str().unwrap()])), 3);
}

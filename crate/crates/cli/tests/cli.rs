use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn jchlens(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jchlens"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_artifacts_and_report_verifies_them() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("surface");
    let cfg = config("surface_band_report.toml");
    let o = jchlens(&["run", cfg.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("PASS"));
    for f in ["manifest.json", "summary.tsv", "checksums.sha256"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"convention\""));

    let o = jchlens(&["report", out.to_str().unwrap()], &out);
    assert!(o.status.success());
    assert!(stdout(&o).contains("checksums ok"));
}

#[test]
fn report_detects_tampered_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let cfg = config("surface_band_report.toml");
    assert!(jchlens(&["run", cfg.to_str().unwrap()], &out).status.success());
    let tsv = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "tsv") && !p.ends_with("summary.tsv"))
        .unwrap();
    let mut text = fs::read_to_string(&tsv).unwrap();
    text.push_str("0\n");
    fs::write(&tsv, text).unwrap();
    let o = jchlens(&["report", out.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("checksum mismatch"));
}

#[test]
fn sweep_writes_one_directory_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let cfg = config("band_report.toml");
    let o = jchlens(&["sweep", cfg.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(out.join("point_000/manifest.json").is_file());
    assert!(out.join("point_001/manifest.json").is_file());
    assert!(stdout(&o).contains("bands.detuning="));
    assert!(jchlens(&["report", out.to_str().unwrap()], &out).status.success());
}

#[test]
fn full_scale_config_needs_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("paper_scale/focal_retune.toml");
    let o = jchlens(&["run", cfg.to_str().unwrap()], &dir.path().join("x"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("refused"));
}

#[test]
fn bad_inputs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(jchlens(&["run", "no/such/file.toml"], &out).status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "experiment = \"no_such_experiment\"\n").unwrap();
    assert_eq!(jchlens(&["run", bad.to_str().unwrap()], &out).status.code(), Some(2));

    let cfg = config("surface_band_report.toml");
    assert_eq!(jchlens(&["run", cfg.to_str().unwrap(), "--threads", "0"], &out).status.code(), Some(2));
    assert_eq!(jchlens(&["run", cfg.to_str().unwrap(), "--tol", "-1"], &out).status.code(), Some(2));
}

#[test]
fn seed_override_lands_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let cfg = config("surface_band_report.toml");
    assert!(jchlens(&["run", cfg.to_str().unwrap(), "--seed", "4242"], &out).status.success());
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 4242);
}

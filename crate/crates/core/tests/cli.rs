//! End-to-end runs of the command line tool.

use fiberlab::config::parse_config;
use fiberlab::output::{sha256_hex, RunManifest, MANIFEST_NAME};
use std::path::Path;
use std::process::{Command, Output};

fn fiberlab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fiberlab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("FIBERLAB_OUT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn geometry_writes_sketch_vertices_and_manifest_last() {
    let dir = tempfile::tempdir().unwrap();
    let o = fiberlab(&["geometry", "--level", "2"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = RunManifest::read(&dir.path().join(MANIFEST_NAME)).unwrap();
    let names: Vec<&str> = m.files.iter().map(|f| f.name.as_str()).collect();
    assert!(names.contains(&"geometry.svg") && names.contains(&"vertices.csv"));
    for f in &m.files {
        let bytes = std::fs::read(dir.path().join(&f.name)).unwrap();
        assert_eq!(sha256_hex(&bytes), f.sha256, "{}", f.name);
    }
    let manifests = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name() == MANIFEST_NAME)
        .count();
    assert_eq!(manifests, 1);
}

#[test]
fn manifest_config_reproduces_the_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let o = fiberlab(&["geometry", "--alpha", "3.4", "--level", "1", "--set", "paths=77"], dir.path());
    assert_eq!(code(&o), 0);
    let m = RunManifest::read(&dir.path().join(MANIFEST_NAME)).unwrap();
    let p = parse_config(&m.config).unwrap();
    assert_eq!(p.alpha, 3.4);
    assert_eq!(p.paths, 77);
    assert_eq!(parse_config(&p.to_text()).unwrap(), p);
}

#[test]
fn rerun_from_manifest_config_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["simulate", "--level", "2", "--paths", "300", "--tmax", "0.05", "--h", "1e-4", "--x0", "0.5,0"];
    assert_eq!(code(&fiberlab(&args, a.path())), 0);
    let cfg = a.path().join("config.txt");
    let o = fiberlab(&["simulate", "--config", cfg.to_str().unwrap()], b.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["paths.csv", "survival.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let text = std::fs::read_to_string(a.path().join("survival.csv")).unwrap();
    assert!(text.starts_with("t,survival,ci_lo,ci_hi\n"));
    assert_eq!(text.lines().count(), 51);
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let o = fiberlab(&["geometry", "--alpha", "5"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("(2, 4)"));

    let cfg = dir.path().join("bad.conf");
    std::fs::write(&cfg, "alpha = 3\nwidth = 2\n").unwrap();
    let o = fiberlab(&["geometry", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    let o = fiberlab(&["simulate", "--level", "1", "--x0", "5,5", "--paths", "2"], dir.path());
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));

    // linear integrands are integrated exactly by both measures, so the decrease check fails
    let o = fiberlab(&["rr-check", "--integrand", "x+y", "--levels", "2,3", "--check"], dir.path());
    assert_eq!(code(&o), 4);
    assert!(dir.path().join(MANIFEST_NAME).exists());
    let o = fiberlab(&["rr-check", "--integrand", "x2+y", "--levels", "2,3,4", "--check"], dir.path());
    assert_eq!(code(&o), 0);
}

#[test]
fn oracle_reports_closed_form_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let o = fiberlab(&["oracle", "--set", "fd_nodes=2000"], dir.path());
    assert_eq!(code(&o), 0);
    let sweep = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 6);
    let s: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["sweep_monotone"], true);
    assert!(s["closed_form_vs_fd_relative"].as_f64().unwrap() < 1e-5);
}

#[test]
fn estimate_writes_a_result() {
    let dir = tempfile::tempdir().unwrap();
    let o = fiberlab(
        &["estimate", "--functional", "dirichlet", "--level", "1", "--paths", "200", "--h", "1e-4", "--tmax", "2"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("estimate.json")).unwrap()).unwrap();
    assert!(s["result"]["estimate"]["mean"].as_f64().unwrap() > 0.0);
}

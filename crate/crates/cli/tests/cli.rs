use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nusrecon::io::{read_container, read_schedule, write_container, SignalContainer};
use nusrecon::spectral::{synthesize_fid, PeakModel, SyntheticSignalSpec};

fn nusrecon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nusrecon")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = nusrecon(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_fid(dir: &Path, n: usize) -> PathBuf {
    let peaks = vec![
        PeakModel { amplitude: 1.0, frequency: 0.2, decay: 40.0, phase: 0.0 },
        PeakModel { amplitude: 0.3, frequency: 0.6, decay: 20.0, phase: 0.0 },
    ];
    let fid = synthesize_fid::<f64>(&SyntheticSignalSpec { peaks, n, noise_sigma: 1e-4, seed: 3 }).unwrap();
    let path = dir.join("fid.sig");
    write_container(&SignalContainer::from_series(&fid, false), &path).unwrap();
    path
}

#[test]
fn mask_undersample_reconstruct_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let fid = write_fid(d, 128);
    let mask = d.join("mask.txt");
    ok(&["--seed", "11", "make-mask", "--n", "128", "--density", "0.25", "--out", p(&mask)]);
    let s = read_schedule(&mask).unwrap();
    assert_eq!((s.len(), s.seed()), (32, 11));
    let again = d.join("again.txt");
    ok(&["--seed", "11", "make-mask", "--n", "128", "--density", "0.25", "--out", p(&again)]);
    assert_eq!(std::fs::read(&mask).unwrap(), std::fs::read(&again).unwrap());

    let under = d.join("under.sig");
    ok(&["undersample", "--in", p(&fid), "--mask", p(&mask), "--out", p(&under)]);
    let u = read_container(&under).unwrap();
    assert_eq!(u.payload.iter().filter(|v| v.norm() > 0.0).count(), 32);

    let spec = d.join("spec.sig");
    let diag = d.join("diag.json");
    ok(&["reconstruct", "--method", "ist", "--in", p(&under), "--mask", p(&mask), "--out", p(&spec), "--diagnostics", p(&diag)]);
    let x = read_container(&spec).unwrap();
    assert_eq!(x.header.shape, vec![256]);
    assert!(x.header.ve);
    let diag: serde_json::Value = serde_json::from_slice(&std::fs::read(&diag).unwrap()).unwrap();
    assert!(diag["rows"][0]["iterations"].as_u64().unwrap() >= 1);

    // Threads do not change a single reconstruction.
    let spec4 = d.join("spec4.sig");
    ok(&["--threads", "3", "reconstruct", "--in", p(&under), "--mask", p(&mask), "--out", p(&spec4)]);
    assert_eq!(std::fs::read(&spec).unwrap(), std::fs::read(&spec4).unwrap());

    let noecho = d.join("noecho.sig");
    ok(&["reconstruct", "--in", p(&under), "--mask", p(&mask), "--ve", "off", "--ist-max-iters", "50", "--ist-shrink", "separable", "--out", p(&noecho)]);
    assert_eq!(read_container(&noecho).unwrap().header.shape, vec![128]);

    let full_mask = d.join("full.txt");
    ok(&["make-mask", "--n", "128", "--density", "1.0", "--out", p(&full_mask)]);
    let reference = d.join("ref.sig");
    ok(&["reconstruct", "--in", p(&fid), "--mask", p(&full_mask), "--ist-max-iters", "1", "--out", p(&reference)]);
    let table = ok(&["evaluate", "--ref", p(&reference), "--hat", p(&spec)]);
    let row: Vec<f64> = table.lines().nth(1).unwrap().split_whitespace().map(|v| v.parse().unwrap()).collect();
    assert!(row[0] < 0.2, "rlne {}", row[0]);
    assert!(row[1] > 0.9, "r2 {}", row[1]);
    let json_out = d.join("eval.json");
    ok(&["evaluate", "--ref", p(&reference), "--hat", p(&spec), "--out", p(&json_out)]);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&json_out).unwrap()).unwrap();
    assert!(v[0]["rlne"].as_f64().unwrap() < 0.2);
}

#[test]
fn plane_mask_is_uniform_over_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let mask = dir.path().join("plane.txt");
    ok(&["make-mask", "--n", "8", "--n2", "16", "--density", "0.5", "--out", p(&mask)]);
    let s = read_schedule(&mask).unwrap();
    assert_eq!(s.grid().extents(), vec![8, 16]);
    assert_eq!(s.len(), 64);
}

#[test]
fn errors_exit_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "# n: 16\n0\n99\n").unwrap();
    let fid = write_fid(dir.path(), 16);
    let out = nusrecon(&["reconstruct", "--in", p(&fid), "--mask", p(&bad), "--out", p(&dir.path().join("x.sig"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");

    let out = nusrecon(&["reconstruct", "--method", "modern", "--in", p(&fid), "--mask", p(&bad), "--out", "x.sig"]);
    assert_eq!(out.status.code(), Some(1));
    let out = nusrecon(&["make-mask", "--n", "16", "--density", "0", "--out", p(&dir.path().join("m.txt"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn quantify_reports_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let vols = d.join("vols.txt");
    std::fs::write(&vols, "# id A1 A2 A3\na 4 2 1\nb 2 1 0.5\nc 1 0.5 0.25\n").unwrap();
    let groups = d.join("groups.json");
    let spec = serde_json::json!([
        { "name": "big", "subgroups": [{ "name": "", "peaks": ["a", "b"] }] },
        { "name": "ref", "subgroups": [{ "name": "", "peaks": ["c"] }] }
    ]);
    std::fs::write(&groups, spec.to_string()).unwrap();
    let out = d.join("q.json");
    ok(&["quantify", "--volumes", p(&vols), "--groups", p(&groups), "--reference", "ref", "--out", p(&out)]);
    let q: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    let ratio = q["groups"][0]["ratio"].as_f64().unwrap();
    assert!((ratio - 3.0).abs() < 1e-12, "{ratio}");
    let text = ok(&["quantify", "--volumes", p(&vols), "--groups", p(&groups), "--reference", "ref"]);
    assert!(text.starts_with("# "));
}

#[test]
fn dataset_train_sweep_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = d.join("spec.json");
    std::fs::write(&spec, r#"{"q_total": 20, "n": 32, "density": 0.25, "split": 0.8}"#).unwrap();
    let data = d.join("data");
    ok(&["--seed", "5", "gen-dataset", "--spec", p(&spec), "--out", p(&data)]);
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(data.join("manifest.json")).unwrap()).unwrap();
    assert_eq!((manifest["n_train"].as_u64(), manifest["n_valid"].as_u64()), (Some(16), Some(4)));

    let cfg = d.join("train.json");
    std::fs::write(&cfg, r#"{"epochs": 2, "batch": 4, "k_iters": 2}"#).unwrap();
    let weights = d.join("w.json");
    let hist = d.join("hist.txt");
    ok(&["train", "--dataset", p(&data), "--config", p(&cfg), "--out", p(&weights), "--history", p(&hist)]);
    assert_eq!(std::fs::read_to_string(&hist).unwrap().lines().count(), 3);
    let w = nusrecon::io::read_weights(&weights).unwrap();
    assert_eq!(w.meta.k_iters, 2);

    let fid = write_fid(d, 32);
    let mask = d.join("mask.txt");
    ok(&["make-mask", "--n", "32", "--density", "0.25", "--out", p(&mask)]);
    let out = d.join("net.sig");
    ok(&["reconstruct", "--method", "modern", "--weights", p(&weights), "--in", p(&fid), "--mask", p(&mask), "--out", p(&out)]);
    assert_eq!(read_container(&out).unwrap().header.shape, vec![64]);

    let scenario = d.join("scenario.json");
    let sc = nusrecon::analysis::preset_scenario(32, 1e-4, 1);
    std::fs::write(&scenario, serde_json::to_string(&sc).unwrap()).unwrap();
    let sweep = ok(&["sweep", "--weights", p(&weights), "--densities", "0.25,0.5", "--trials", "2", "--scenario", p(&scenario)]);
    assert_eq!(sweep.lines().count(), 3);
    let sweep = ok(&["sweep", "--ist", "--densities", "0.25", "--trials", "2", "--scenario", p(&scenario)]);
    assert_eq!(sweep.lines().count(), 2);
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use decaf::config::RunConfig;
use decaf::io::{read_measurements, read_volume, write_volume};
use decaf::volume::{Grid3D, PermittivityVolume};

fn decaf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_decaf"))
        .args(args)
        .env("DECAF_THREADS", "1")
        .output()
        .expect("run decaf")
}

fn ok(args: &[&str]) -> String {
    let out = decaf(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = RunConfig::default();
    cfg.grid = Grid3D::centered(16, 16, 2, 0.1625, 0.1625, 0.5).unwrap();
    cfg.phantom.count = 3;
    cfg.train.iterations = 20;
    cfg.train.log_every = 10;
    let path = dir.join("run.json");
    fs::write(&path, cfg.to_json().unwrap()).unwrap();
    path
}

#[test]
fn simulate_reconstruct_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let sim = dir.path().join("sim");
    ok(&["simulate", "--config", p(&cfg), "--noise", "0.001", "--out", p(&sim)]);
    assert_eq!(read_measurements(&sim.join("measurements.dcam")).unwrap().images.dim(), (24, 16, 16));
    assert!(sim.join("config.json").exists());

    let rec = dir.path().join("rec");
    let sim_cfg = sim.join("config.json");
    ok(&["reconstruct", "--config", p(&sim_cfg), "--out", p(&rec)]);
    for f in ["field.dcfw", "volume.dcaf", "log.csv", "config.json"] {
        assert!(rec.join(f).exists(), "{f}");
    }
    let log = fs::read_to_string(rec.join("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 3);

    let text = ok(&[
        "evaluate",
        "--reference",
        p(&sim.join("phantom.dcaf")),
        "--estimate",
        p(&rec.join("volume.dcaf")),
    ]);
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(json["psnr_db"].as_f64().unwrap().is_finite());

    // rendering the stored weights at the training grid reproduces the volume
    let rendered = dir.path().join("render.dcaf");
    ok(&["render", "--config", p(&sim_cfg), "--weights", p(&rec.join("field.dcfw")), "--out", p(&rendered)]);
    assert_eq!(fs::read(&rendered).unwrap(), fs::read(rec.join("volume.dcaf")).unwrap());
    let up = dir.path().join("up.dcaf");
    ok(&["render", "--config", p(&sim_cfg), "--weights", p(&rec.join("field.dcfw")), "--upsample", "2x2x2", "--out", p(&up)]);
    assert_eq!(read_volume(&up).unwrap().grid.shape(), (3, 31, 31));

    let tik = dir.path().join("tik.dcaf");
    ok(&["tikhonov", "--config", p(&sim_cfg), "--out", p(&tik)]);
    assert!(read_volume(&tik).unwrap().norm() > 0.0);

    let png = dir.path().join("slice.png");
    ok(&["export", "--volume", p(&tik), "--axis", "z", "--index", "1", "--out", p(&png)]);
    assert!(png.exists());
}

#[test]
fn identical_inputs_give_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid3D::centered(4, 4, 2, 0.2, 0.2, 0.5).unwrap();
    let mut v = PermittivityVolume::zeros(g);
    v.re[[1, 2, 2]] = 0.1;
    let path = dir.path().join("v.dcaf");
    write_volume(&path, &v).unwrap();
    let text = ok(&["evaluate", "--reference", p(&path), "--estimate", p(&path)]);
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["diagnostic"], "identical inputs");
    assert_eq!(json["mse"], 0.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| decaf(args).status.code().unwrap();

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"no_such_field": 1}"#).unwrap();
    assert_eq!(code(&["simulate", "--config", p(&bad), "--out", p(dir.path())]), 2);

    let missing = dir.path().join("missing.dcaf");
    assert_eq!(code(&["evaluate", "--reference", p(&missing), "--estimate", p(&missing)]), 3);

    let junk = dir.path().join("junk.dcaf");
    fs::write(&junk, b"DCAF").unwrap();
    assert_eq!(code(&["evaluate", "--reference", p(&junk), "--estimate", p(&junk)]), 3);

    let a = dir.path().join("a.dcaf");
    let b = dir.path().join("b.dcaf");
    write_volume(&a, &PermittivityVolume::zeros(Grid3D::centered(4, 4, 2, 0.2, 0.2, 0.5).unwrap())).unwrap();
    write_volume(&b, &PermittivityVolume::zeros(Grid3D::centered(4, 4, 3, 0.2, 0.2, 0.5).unwrap())).unwrap();
    assert_eq!(code(&["evaluate", "--reference", p(&a), "--estimate", p(&b)]), 5);
    assert_eq!(code(&["export", "--volume", p(&a), "--axis", "z", "--index", "7", "--out", p(&dir.path().join("x.png"))]), 5);
}

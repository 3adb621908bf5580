use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spa_core::{read_tensor, write_tensor, DenseTensor, FeatureGrid, Map2D};

fn spa(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spa"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SPA_JOBS")
        .output()
        .expect("spawn spa")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/eval4")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_grid(dir: &Path, name: &str, h: usize, w: usize, c: usize) {
    let data = (0..h * w * c)
        .map(|i| ((i * 37 % 23) as f32 / 11.0) - 1.0 + 0.01)
        .collect();
    let g = FeatureGrid::new(h, w, c, data).unwrap();
    write_tensor(&g.to_tensor(), dir.join(name)).unwrap();
}

fn write_cam(dir: &Path, name: &str, h: usize, w: usize) {
    let cam = Map2D::from_fn(h, w, |y, x| if y < h / 2 && x < w / 2 { 1.0 } else { 0.05 * (x as f32) / w as f32 });
    write_tensor(&cam.to_tensor(), dir.join(name)).unwrap();
}

#[test]
fn hsc_writes_square_matrix_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    write_grid(dir.path(), "f.spt", 4, 5, 6);
    let o = spa(&["hsc", "--features", "f.spt", "--orders", "1,2", "--out", "h.spt"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let t = read_tensor(dir.path().join("h.spt")).unwrap();
    assert_eq!(t.dims(), &[20, 20]);
    let m = json(&dir.path().join("h.spt.manifest.json"));
    assert_eq!(m["command"], "hsc");
    assert_eq!(m["config"]["orders"], "1,2");
    for out in m["outputs"].as_array().unwrap() {
        assert!(dir.path().join(out.as_str().unwrap()).exists());
    }
}

#[test]
fn two_layers_fuse_on_requested_grid() {
    let dir = tempfile::tempdir().unwrap();
    write_grid(dir.path(), "a.spt", 3, 3, 4);
    write_grid(dir.path(), "b.spt", 6, 6, 5);
    let o = spa(
        &["hsc", "--features", "a.spt,b.spt", "--grid", "6x6", "--out", "h.spt"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_tensor(dir.path().join("h.spt")).unwrap().dims(), &[36, 36]);
}

#[test]
fn scg_rejects_inverted_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    write_grid(dir.path(), "f.spt", 4, 4, 3);
    write_cam(dir.path(), "cam.spt", 4, 4);
    let o = spa(
        &["scg", "--features", "f.spt", "--cam", "cam.spt", "--delta-h", "0.3", "--delta-l", "0.5", "--out", "m.spt"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("E_USAGE:"), "{}", stderr(&o));
    assert!(!dir.path().join("m.spt").exists());
}

#[test]
fn scg_rerun_from_manifest_is_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    write_grid(dir.path(), "f.spt", 6, 6, 4);
    write_cam(dir.path(), "cam.spt", 6, 6);
    let o = spa(
        &["scg", "--features", "f.spt", "--cam", "cam.spt", "--delta-h", "0.6", "--out", "m.spt"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = json(&dir.path().join("m.spt.manifest.json"));
    assert_eq!(manifest["config"]["delta-h"], "0.6");
    assert_eq!(manifest["flags"]["fallback_to_cam"], false);
    std::fs::rename(dir.path().join("m.spt"), dir.path().join("first.spt")).unwrap();
    std::fs::rename(dir.path().join("m.spt.manifest.json"), dir.path().join("run.json")).unwrap();
    let o = spa(&["scg", "--config", "run.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let a = std::fs::read(dir.path().join("first.spt")).unwrap();
    let b = std::fs::read(dir.path().join("m.spt")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn flags_beat_config_beats_defaults() {
    let dir = tempfile::tempdir().unwrap();
    write_grid(dir.path(), "f.spt", 4, 4, 3);
    write_cam(dir.path(), "cam.spt", 4, 4);
    std::fs::write(dir.path().join("c.json"), r#"{"delta-h": 0.8, "delta-l": 0.2, "jobs": 2}"#).unwrap();
    let o = spa(
        &["scg", "--config", "c.json", "--delta-l", "0.05", "--features", "f.spt", "--cam", "cam.spt", "--out", "m.spt"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let m = json(&dir.path().join("m.spt.manifest.json"));
    assert_eq!(m["config"]["delta-h"], "0.8");
    assert_eq!(m["config"]["delta-l"], "0.05");
    assert_eq!(m["config"]["orders"], "1,2");
    assert_eq!(m["config"]["jobs"], "2");

    let o = Command::new(env!("CARGO_BIN_EXE_spa"))
        .args(["scg", "--config", "c.json", "--features", "f.spt", "--cam", "cam.spt", "--out", "n.spt"])
        .current_dir(dir.path())
        .env("SPA_JOBS", "3")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json(&dir.path().join("n.spt.manifest.json"))["config"]["jobs"], "3");
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"thetaa": 0.3}"#).unwrap();
    let o = spa(&["eval", "--config", "c.json", "--ann", "a.json", "--out", "r.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("thetaa"));
}

#[test]
fn usage_and_data_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = spa(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = spa(&["hsc", "--features", "f.spt"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("E_USAGE:"));
    let o = spa(&["hsc", "--features", "missing.spt", "--out", "h.spt"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("E_IO:"), "{}", stderr(&o));

    let bytes = DenseTensor::new(vec![2, 2, 2], vec![1.0; 8]).unwrap().to_bytes();
    std::fs::write(dir.path().join("cut.spt"), &bytes[..bytes.len() - 3]).unwrap();
    let o = spa(&["hsc", "--features", "cut.spt", "--out", "h.spt"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("E_TRUNCATED:"), "{}", stderr(&o));

    let o = spa(&["hsc", "--features", "cut.spt", "--out", "h.spt", "--jobs", "0"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_matches_committed_golden_reports() {
    let dir = tempfile::tempdir().unwrap();
    let ann = fixtures().join("annotation.json");
    for (mode, golden) in [("box", "golden_report.json"), ("mask", "golden_report_mask.json")] {
        for jobs in ["1", "3"] {
            let out = dir.path().join(format!("{mode}_{jobs}.json"));
            let o = spa(
                &[
                    "eval",
                    "--ann",
                    ann.to_str().unwrap(),
                    "--mode",
                    mode,
                    "--jobs",
                    jobs,
                    "--out",
                    out.to_str().unwrap(),
                ],
                dir.path(),
            );
            assert!(o.status.success(), "{}", stderr(&o));
            let want = std::fs::read(fixtures().join(golden)).unwrap();
            assert_eq!(std::fs::read(&out).unwrap(), want, "{mode} with {jobs} jobs");
        }
    }
}

#[test]
fn eval_csv_lists_every_image() {
    let dir = tempfile::tempdir().unwrap();
    let ann = fixtures().join("annotation.json");
    let o = spa(
        &["eval", "--ann", ann.to_str().unwrap(), "--mode", "mask", "--out", "r.json", "--csv", "r.csv"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "image_id,iou,peak_iou,peak_t,error_case");
    assert_eq!(lines.len(), 5);
    let cases: Vec<&str> = lines[1..].iter().map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(cases, ["Correct", "Cls", "M-Ins", "Part"]);
}

#[test]
fn eval_counts_unreadable_maps_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let mut records = json(&fixtures().join("annotation.json"));
    for r in records.as_array_mut().unwrap() {
        let map = r["map"].as_str().unwrap().to_owned();
        r["map"] = fixtures().join(map).to_str().unwrap().into();
        r["gt_mask"] = serde_json::Value::Null;
    }
    records[1]["map"] = "gone.spt".into();
    std::fs::write(dir.path().join("a.json"), records.to_string()).unwrap();
    let o = spa(&["eval", "--ann", "a.json", "--out", "r.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("E_IO"));
    let r = json(&dir.path().join("r.json"));
    assert_eq!(r["num_images"], 3);
    assert_eq!(r["num_failed"], 1);
    let m = json(&dir.path().join("r.json.manifest.json"));
    assert_eq!(m["flags"]["failures"][0]["image_id"], "synth_0001");
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = spa(
            &["synth", "--out-dir", out, "--count", "3", "--seed", "5", "--map", "scg", "--height", "10", "--width", "10"],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let names = ["annotation.json", "features_0002.spt", "cam_0001.spt", "mask_0000.spt", "scg_0002.spt"];
    for name in names {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let m = json(&dir.path().join("a/manifest.json"));
    assert_eq!(m["outputs"].as_array().unwrap().len(), 3 * 4 + 1);
    assert_eq!(m["flags"]["prng"], spa_core::fixture::PRNG_NAME);
}

fn write_scores(dir: &Path) {
    let (h, w, c) = (3, 4, 5);
    let data = (0..h * w * c)
        .map(|i| if i % 7 == 0 { 4.0 } else { (i % 5) as f32 * 0.1 })
        .collect();
    write_tensor(&DenseTensor::new(vec![h, w, c], data).unwrap(), dir.join("s.spt")).unwrap();
}

#[test]
fn ram_subcommands_produce_documented_outputs() {
    let dir = tempfile::tempdir().unwrap();
    write_scores(dir.path());
    let o = spa(&["ram-masks", "--scores", "s.spt", "--out", "m.spt"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let masks = read_tensor(dir.path().join("m.spt")).unwrap();
    assert_eq!(masks.dims(), &[2, 3, 4]);
    let (bg, obj) = masks.data().split_at(12);
    assert!(bg.iter().zip(obj).all(|(a, b)| a * b == 0.0));

    let o = spa(&["loss", "--scores", "s.spt", "--class", "2", "--alpha", "0.5"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let total = v["total"].as_f64().unwrap();
    let want = v["l_ce"].as_f64().unwrap() + 0.5 * v["l_ra"].as_f64().unwrap();
    assert!((total - want).abs() < 1e-12);

    let o = spa(&["grad", "--scores", "s.spt", "--class", "2", "--out", "g.spt"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_tensor(dir.path().join("g.spt")).unwrap().dims(), &[3, 4, 5]);

    let o = spa(&["loss", "--scores", "s.spt", "--class", "9"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("E_CLASS:"));
}

#[test]
fn bbox_and_render() {
    let dir = tempfile::tempdir().unwrap();
    let map = Map2D::from_fn(8, 8, |y, x| if (2..5).contains(&y) && (3..7).contains(&x) { 1.0 } else { 0.0 });
    write_tensor(&map.to_tensor(), dir.path().join("m.spt")).unwrap();
    let o = spa(&["bbox", "--map", "m.spt"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["bbox"], serde_json::json!([3, 2, 7, 5]));

    for cmap in ["gray", "jet"] {
        let o = spa(&["render", "--map", "m.spt", "--out", "m.png", "--scale", "3", "--colormap", cmap], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        let png = std::fs::read(dir.path().join("m.png")).unwrap();
        assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");
        // IHDR width and height, big-endian
        assert_eq!(&png[16..24], &[0, 0, 0, 24, 0, 0, 0, 24]);
        assert_eq!(png[25], if cmap == "gray" { 0 } else { 2 });
    }
}

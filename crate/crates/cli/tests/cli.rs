use std::path::Path;
use std::process::{Command, Output};

use edgeopc::geometry::segment_edges;
use edgeopc::io::{self, Layout};
use edgeopc::{MetricsReport, Polygon};

fn edgeopc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgeopc"))
        .args(args)
        .env_remove("EDGEOPC_THREADS")
        .output()
        .expect("spawn edgeopc")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn small_inputs(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let layout = Layout::new(128, 128, vec![Polygon::rect(34.0, 34.0, 94.0, 94.0).unwrap()]);
    let lp = dir.join("layout.json");
    io::write_layout(&lp, &layout).unwrap();
    let kp = dir.join("k.bin");
    let out = edgeopc(&["kernels", "--size", "31", "--count", "3", "-o", path(&kp)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (lp, kp)
}

#[test]
fn lists_and_writes_fixtures() {
    let out = edgeopc(&["fixture", "--list"]);
    assert!(out.status.success());
    let names = String::from_utf8(out.stdout).unwrap();
    assert!(names.lines().any(|l| l == "tight_lines"));

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("sq.json");
    assert!(edgeopc(&["fixture", "square", "--scale", "2", "-o", path(&p)]).status.success());
    let l = io::read_layout(&p).unwrap();
    assert_eq!((l.width, l.height), (1024, 1024));
}

#[test]
fn unknown_fixture_fails_with_message() {
    let out = edgeopc(&["fixture", "nope"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown fixture"));
}

#[test]
fn optimize_writes_outputs_independent_of_threads() {
    let dir = tempfile::tempdir().unwrap();
    let (lp, kp) = small_inputs(dir.path());
    let mut files = Vec::new();
    for threads in ["1", "3"] {
        let o = dir.path().join(format!("out{threads}"));
        let out = edgeopc(&[
            "--threads", threads, "optimize", "--layout", path(&lp), "--kernels", path(&kp), "--iterations", "4", "-o",
            path(&o),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("final"));
        for f in ["mask.pgm", "geometry.json", "metrics.json", "convergence.csv", "timing.json"] {
            assert!(o.join(f).exists(), "{f}");
        }
        let m: MetricsReport = io::read_json(&o.join("metrics.json")).unwrap();
        assert!(m.l2 >= 0.0);
        files.push(["mask.pgm", "geometry.json", "metrics.json"].map(|f| std::fs::read(o.join(f)).unwrap()));

        let check = edgeopc(&["check", path(&o.join("geometry.json"))]);
        assert_eq!(check.status.code(), Some(0), "{}", String::from_utf8_lossy(&check.stderr));

        let metrics = edgeopc(&[
            "metrics", "--mask", path(&o.join("mask.pgm")), "--layout", path(&lp), "--kernels", path(&kp),
        ]);
        assert!(metrics.status.success(), "{}", String::from_utf8_lossy(&metrics.stderr));
        assert!(String::from_utf8_lossy(&metrics.stdout).contains("L2"));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn check_reports_spacing_violation() {
    let dir = tempfile::tempdir().unwrap();
    // Two lines 30 apart, under the 40 spacing rule.
    let polys = [Polygon::rect(20.0, 20.0, 80.0, 100.0).unwrap(), Polygon::rect(110.0, 20.0, 170.0, 100.0).unwrap()];
    let s = segment_edges(&polys, 80.0).unwrap();
    let g = dir.path().join("g.json");
    io::write_geometry(&g, &s, 200, 128).unwrap();
    let out = edgeopc(&["check", path(&g)]);
    assert_eq!(out.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(!v.as_array().unwrap().is_empty());
}

#[test]
fn metrics_rejects_mismatched_mask() {
    let dir = tempfile::tempdir().unwrap();
    let (lp, kp) = small_inputs(dir.path());
    let m = dir.path().join("m.pgm");
    io::write_pgm(&m, &edgeopc::Grid::zeros(64, 64)).unwrap();
    let out = edgeopc(&["metrics", "--mask", path(&m), "--layout", path(&lp), "--kernels", path(&kp)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("64x64"));
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (lp, kp) = small_inputs(dir.path());
    let c = dir.path().join("c.toml");
    std::fs::write(&c, "learning_rate = -1.0\n").unwrap();
    let out = edgeopc(&[
        "optimize", "--layout", path(&lp), "--kernels", path(&kp), "--config", path(&c), "-o", path(dir.path()),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}

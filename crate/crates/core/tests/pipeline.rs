use edgeopc::fixtures::{oracle_rasterize_segments, oracle_rings_closed};
use edgeopc::geometry::segment_edges;
use edgeopc::io::{self, Layout};
use edgeopc::litho::make_synthetic_kernels;
use edgeopc::mrc::check_violations;
use edgeopc::optimizer::{run_from_config, IterationLog};
use edgeopc::raster::rasterize;
use edgeopc::sraf::{generate_sraf_seeds, SrafConfig};
use edgeopc::{optimize, Grid, MetricsReport, MrcRuleSet, OptimizerConfig, Polygon};

fn pair_layout(gap: f64) -> Layout {
    let x1 = 40.0 + 60.0 + gap;
    Layout::new(
        192,
        128,
        vec![
            Polygon::rect(40.0, 24.0, 100.0, 104.0).unwrap(),
            Polygon::rect(x1, 24.0, x1 + 60.0, 104.0).unwrap(),
        ],
    )
}

#[test]
fn run_from_config_writes_consistent_files() {
    let dir = tempfile::tempdir().unwrap();
    let lp = dir.path().join("layout.json");
    let kp = dir.path().join("k.bin");
    let cp = dir.path().join("opt.toml");
    io::write_layout(&lp, &pair_layout(50.0)).unwrap();
    io::write_kernels(&kp, &make_synthetic_kernels(31, 3, 1.35).unwrap()).unwrap();
    std::fs::write(&cp, "iterations = 6\nlearning_rate = 2.0\n\n[weights]\nw1 = 1.0\nw2 = 0.9\nw3 = 100.0\n").unwrap();
    let cfg: OptimizerConfig = io::read_config(&cp).unwrap();
    assert_eq!(cfg.iterations, 6);
    let out = dir.path().join("out");
    let r = run_from_config(&lp, &cfg, &[kp.as_path()], &out).unwrap();

    let mask = io::read_pgm(&out.join("mask.pgm")).unwrap();
    assert_eq!(mask, r.mask);
    let g = io::read_geometry(&out.join("geometry.json")).unwrap().to_segments().unwrap();
    assert!(oracle_rings_closed(&g));
    // The written geometry rasterizes to the written mask.
    assert_eq!(rasterize(&g, 192, 128).unwrap(), mask);
    assert_eq!(oracle_rasterize_segments(&g, 192, 128), mask);

    let m: MetricsReport = io::read_json(&out.join("metrics.json")).unwrap();
    assert_eq!(m, MetricsReport { tat_seconds: 0.0, ..r.metrics });
    let csv = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(IterationLog::CSV_HEADER));
    assert_eq!(csv.lines().count(), 1 + r.log.len());
    assert!(out.join("timing.json").exists());
}

#[test]
fn gated_run_keeps_a_tight_pair_legal() {
    let ks = make_synthetic_kernels(63, 3, 1.35).unwrap();
    // 48 clears the 45 end-of-line spacing that applies to these 80 nm edges.
    let l = pair_layout(48.0);
    let cfg = OptimizerConfig {
        iterations: 30,
        ..Default::default()
    };
    let drawn = segment_edges(&l.polygons, cfg.seg_length).unwrap();
    assert_eq!(check_violations(&drawn, &cfg.rules().unwrap()), vec![]);
    let r = optimize(&l, &cfg, &ks).unwrap();
    assert!(r.merged.check_closed().is_ok());
    assert_eq!(check_violations(&r.merged, &cfg.rules().unwrap()), vec![]);
    assert!(r.log.iter().all(|row| row.max_displacement <= cfg.max_step * cfg.iterations as f64));
}

#[test]
fn seeds_respect_keep_out_zone() {
    let ks = make_synthetic_kernels(511, 5, 1.35).unwrap();
    let t = Grid::from_fn(512, 512, |x, y| ((221..291).contains(&x) && (221..291).contains(&y)) as u8 as f64);
    let rules = MrcRuleSet::default();
    let cfg = SrafConfig::default();
    let seeds = generate_sraf_seeds(&t, &ks, &rules, &cfg, 50.0, 0.225).unwrap();
    assert!(!seeds.is_empty());
    assert!(seeds.len() <= cfg.max_srafs);
    let keep = (rules.gate_spacing() + cfg.clearance) as i64;
    for s in &seeds {
        let (x0, x1, y0, y1) = s.pixel_span();
        let gap_x = (221 - x1 - 1).max(x0 - 290 - 1);
        let gap_y = (221 - y1 - 1).max(y0 - 290 - 1);
        assert!(gap_x.max(gap_y) >= keep, "{s:?}");
        assert!(s.score < 0.0);
    }
}

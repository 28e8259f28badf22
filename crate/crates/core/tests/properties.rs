use edgeopc::fixtures::{
    oracle_intensity, oracle_rasterize, oracle_rings_closed, random_layout_with, RandomLayoutParams,
};
use edgeopc::geometry::{merge_corners, partition_edge, segment_edges, ste_round};
use edgeopc::io::{decode_kernels, decode_pgm, encode_kernels, encode_pgm};
use edgeopc::litho::{make_synthetic_kernels, simulate};
use edgeopc::metrics::{decompose_rects, paint_rects};
use edgeopc::mrc::{apply_gates, gate_factor, Gates};
use edgeopc::raster::{rasterize, rasterize_serial};
use edgeopc::{Grid, SegmentSet};
use proptest::prelude::*;

fn small_params() -> RandomLayoutParams {
    RandomLayoutParams {
        min_size: 6,
        max_size: 40,
        spacing: 3.0,
        margin: 1.0,
        donuts: true,
    }
}

fn jitter(s: &SegmentSet, moves: &[i8]) -> SegmentSet {
    let mut out = s.clone();
    for (i, c) in out.coords.iter_mut().enumerate() {
        let d = moves[i % moves.len()] as f64;
        let v = s.velocities[i];
        for p in c.iter_mut() {
            p[0] += d * v[0];
            p[1] += d * v[1];
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raster_matches_point_in_polygon(seed in any::<u64>(), n in 1usize..6) {
        let l = random_layout_with(seed, 64, 64, n, &small_params());
        prop_assume!(!l.polygons.is_empty());
        let s = segment_edges(&l.polygons, 80.0).unwrap();
        let m = rasterize(&s, 64, 64).unwrap();
        prop_assert_eq!(&m, &oracle_rasterize(&l.polygons, 64, 64));
        prop_assert_eq!(&m, &rasterize_serial(&s, 64, 64).unwrap());
    }

    #[test]
    fn partition_tiles_the_edge(len in 1u32..2000, seg in 10u32..200, min in 0u32..60) {
        let (len, seg, min) = (len as f64, seg as f64, min as f64);
        let p = partition_edge(len, seg, min);
        prop_assert!(!p.is_empty());
        prop_assert_eq!(p[0].0, 0.0);
        prop_assert_eq!(p[p.len() - 1].1, len);
        for w in p.windows(2) {
            prop_assert_eq!(w[0].1, w[1].0);
        }
        for &(a, b) in &p {
            prop_assert!(b > a);
            if p.len() > 1 {
                prop_assert!(b - a >= min, "{:?}", p);
            }
        }
        if min <= seg * 0.5 {
            for &(a, b) in &p {
                prop_assert!(b - a <= seg, "{:?}", p);
            }
        }
    }

    #[test]
    fn jittered_rings_close_and_merge_is_idempotent(
        seed in any::<u64>(),
        moves in prop::collection::vec(-1i8..=1, 1..64),
        rounds in 1usize..3,
    ) {
        let l = random_layout_with(seed, 128, 128, 4, &small_params());
        prop_assume!(!l.polygons.is_empty());
        let mut s = segment_edges(&l.polygons, 20.0).unwrap();
        for r in 0..rounds {
            let shifted: Vec<i8> = moves.iter().cycle().skip(r).take(moves.len()).copied().collect();
            s = jitter(&s, &shifted);
            let merged = merge_corners(&ste_round(&s)).unwrap();
            prop_assert!(merged.check_closed().is_ok());
            prop_assert!(oracle_rings_closed(&merged));
            prop_assert_eq!(&merge_corners(&merged).unwrap(), &merged);
            s = merged;
        }
    }

    #[test]
    fn rounding_is_idempotent(seed in any::<u64>(), moves in prop::collection::vec(-1i8..=1, 1..16)) {
        let l = random_layout_with(seed, 128, 128, 3, &small_params());
        prop_assume!(!l.polygons.is_empty());
        let s = jitter(&segment_edges(&l.polygons, 20.0).unwrap(), &moves);
        let once = ste_round(&s);
        prop_assert!(once.is_integral());
        prop_assert_eq!(&ste_round(&once), &once);
    }

    #[test]
    fn gate_is_monotone(d in 1.0f64..100.0, a in -50.0f64..50.0, b in 0.001f64..5.0, beta in 1.0f64..100.0) {
        let lo = gate_factor(d + a, d, beta);
        let hi = gate_factor(d + a + b, d, beta);
        prop_assert!(hi >= lo);
        prop_assert!((0.0..=1.0).contains(&lo));
        prop_assert_eq!(gate_factor(d, d, beta), 0.5);
    }

    #[test]
    fn ungated_segments_keep_their_gradient(g in prop::collection::vec(-10.0f64..10.0, 1..40)) {
        let n = g.len();
        let gates = Gates { outward: vec![1.0; n], inward: vec![1.0; n] };
        let mut out = g.clone();
        prop_assert_eq!(apply_gates(&mut out, &gates), 0);
        prop_assert_eq!(out, g);
    }

    #[test]
    fn rect_decomposition_reconstructs(bits in prop::collection::vec(any::<bool>(), 1..400), w in 1usize..20) {
        let h = bits.len().div_ceil(w);
        let m = Grid::from_fn(w, h, |x, y| bits.get(y * w + x).copied().unwrap_or(false) as u8 as f64);
        let r = decompose_rects(&m);
        prop_assert_eq!(paint_rects(&r, w, h), m);
        for q in &r {
            prop_assert!(q.x0 < q.x1 && q.y0 < q.y1);
        }
    }

    #[test]
    fn pgm_round_trips(bits in prop::collection::vec(any::<bool>(), 1..300), w in 1usize..17) {
        let h = bits.len().div_ceil(w);
        let m = Grid::from_fn(w, h, |x, y| bits.get(y * w + x).copied().unwrap_or(true) as u8 as f64);
        prop_assert_eq!(decode_pgm(&encode_pgm(&m)).unwrap(), m);
    }

    #[test]
    fn kernel_file_round_trips(size in (0usize..6).prop_map(|k| 2 * k + 1), count in 1usize..4) {
        let ks = make_synthetic_kernels(size, count, 1.35).unwrap();
        let back = decode_kernels(&encode_kernels(&ks), "rt").unwrap();
        prop_assert_eq!(back.size(), ks.size());
        prop_assert_eq!(back.weights(), ks.weights());
        for k in 0..count {
            prop_assert_eq!(back.kernel(k), ks.kernel(k));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fft_imaging_matches_direct_convolution(seed in any::<u64>(), size in (1usize..6).prop_map(|k| 2 * k + 1)) {
        let l = random_layout_with(seed, 24, 20, 3, &RandomLayoutParams { min_size: 3, max_size: 9, ..small_params() });
        let m = oracle_rasterize(&l.polygons, 24, 20);
        let ks = make_synthetic_kernels(size, 3, 1.35).unwrap();
        let fast = simulate(&m, &ks).unwrap();
        let slow = oracle_intensity(&m, &ks);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{} vs {}", a, b);
        }
    }
}

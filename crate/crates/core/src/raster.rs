//! Segment rings → binary mask by ray casting, and image gradients → edge
//! gradients.
//!
//! Only horizontal boundary pieces are tested. For a horizontal piece the
//! crossing predicate selects pixels whose x lies in the half-open span
//! `[min x, max x)` and whose y lies strictly above the piece, so a
//! rectangle `[x0, x1] × [y0, y1]` fills columns `x0..x1` and rows
//! `y0+1..=y1`. Equivalently, pixel `(ix, iy)` reports membership of the
//! off-grid point `(ix + 0.5, iy - 0.5)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Axis, Piece, Point, SegmentSet};
use crate::grid::{Grid, Mask};
use crate::par;

/// Crossing predicate for a horizontal piece `start -> end`.
#[inline]
pub fn check_cross(p: Point, start: Point, end: Point) -> bool {
    let v1 = (p.x - start.x, p.y - start.y);
    let v2 = (p.x - end.x, p.y - end.y);
    let cross = v1.0 * v2.1 - v1.1 * v2.0;
    (v1.0 < 0.0 && v2.0 >= 0.0 && cross < 0.0) || (v1.0 >= 0.0 && v2.0 < 0.0 && cross > 0.0)
}

#[derive(Clone, Copy, Debug)]
struct HRun {
    a: Point,
    b: Point,
    y: f64,
    x_lo: i64,
    x_hi: i64,
}

#[derive(Clone, Debug)]
struct RingRuns {
    runs: Vec<HRun>,
    y_lo: f64,
    y_hi: f64,
}

fn clamp_point(p: Point, w: usize, h: usize, clamped: &mut bool) -> Point {
    let q = Point::new(p.x.clamp(0.0, w as f64), p.y.clamp(0.0, h as f64));
    if q != p {
        *clamped = true;
    }
    q
}

fn collect_runs(merged: &SegmentSet, w: usize, h: usize, axis: Axis) -> Vec<RingRuns> {
    let pieces = merged.boundary_pieces(false);
    let mut rings: Vec<RingRuns> = (0..merged.rings.len())
        .map(|_| RingRuns {
            runs: Vec::new(),
            y_lo: f64::INFINITY,
            y_hi: f64::NEG_INFINITY,
        })
        .collect();
    let mut clamped = false;
    for Piece { a, b, ring, .. } in pieces {
        let a = clamp_point(a, w, h, &mut clamped);
        let b = clamp_point(b, w, h, &mut clamped);
        let r = &mut rings[ring];
        let cross = axis.other();
        r.y_lo = r.y_lo.min(cross.along(a)).min(cross.along(b));
        r.y_hi = r.y_hi.max(cross.along(a)).max(cross.along(b));
        if a == b || axis.across(a) != axis.across(b) {
            continue;
        }
        let (lo, hi) = (axis.along(a).min(axis.along(b)), axis.along(a).max(axis.along(b)));
        r.runs.push(HRun {
            a,
            b,
            y: axis.across(a),
            x_lo: lo.floor() as i64,
            x_hi: hi.ceil() as i64,
        });
    }
    if clamped {
        log::warn!("segment coordinates outside the {w}x{h} clip were clamped");
    }
    rings
}

fn fill_row(rings: &[RingRuns], py: usize, row: &mut [f64], counts: &mut [u32]) {
    let y = py as f64;
    let w = row.len() as i64;
    counts.iter_mut().for_each(|c| *c = 0);
    for ring in rings {
        // Rows at or below the ring's lowest run, or above its highest,
        // see an even number of crossings.
        if !(y > ring.y_lo && y <= ring.y_hi) {
            continue;
        }
        for run in &ring.runs {
            if run.y >= y {
                continue;
            }
            let x0 = run.x_lo.max(0);
            let x1 = run.x_hi.min(w - 1);
            for px in x0..=x1 {
                if check_cross(Point::new(px as f64, y), run.a, run.b) {
                    counts[px as usize] += 1;
                }
            }
        }
    }
    for (v, c) in row.iter_mut().zip(counts.iter()) {
        *v = (c & 1) as f64;
    }
}

/// Even-odd ray-casting rasterization over horizontal boundary pieces.
/// Rows are independent and may run in parallel; counts are integers, so
/// the result is identical for any thread count.
pub fn rasterize(merged: &SegmentSet, width: usize, height: usize) -> Result<Mask> {
    let rings = prepare(merged, width, height)?;
    let mut mask = Grid::zeros(width, height);
    par::for_each_chunk_mut(mask.data_mut(), width, |py, row| {
        let mut counts = vec![0u32; width];
        fill_row(&rings, py, row, &mut counts);
    });
    Ok(mask)
}

/// Single-threaded [`rasterize`], always available for benchmarking.
pub fn rasterize_serial(merged: &SegmentSet, width: usize, height: usize) -> Result<Mask> {
    let rings = prepare(merged, width, height)?;
    let mut mask = Grid::zeros(width, height);
    let mut counts = vec![0u32; width];
    for (py, row) in mask.data_mut().chunks_mut(width).enumerate() {
        fill_row(&rings, py, row, &mut counts);
    }
    Ok(mask)
}

fn prepare(merged: &SegmentSet, width: usize, height: usize) -> Result<Vec<RingRuns>> {
    if width == 0 || height == 0 {
        return Err(Error::config(format!("mask size must be positive, got {width}x{height}")));
    }
    merged.check_closed()?;
    Ok(collect_runs(merged, width, height, Axis::Horizontal))
}

/// Same mask computed from vertical pieces only, casting rays along +x:
/// a vertical piece at `x = e` is crossed by pixel `(px, py)` when
/// `e > px` and `py` lies in its half-open span `(min y, max y]`.
pub fn rasterize_vertical(merged: &SegmentSet, width: usize, height: usize) -> Result<Mask> {
    if width == 0 || height == 0 {
        return Err(Error::config(format!("mask size must be positive, got {width}x{height}")));
    }
    merged.check_closed()?;
    let rings = collect_runs(merged, width, height, Axis::Vertical);
    let mut mask = Grid::zeros(width, height);
    par::for_each_chunk_mut(mask.data_mut(), width, |py, row| {
        let y = py as f64;
        let mut parity = vec![false; width + 1];
        for ring in &rings {
            for run in &ring.runs {
                let (lo, hi) = (run.a.y.min(run.b.y), run.a.y.max(run.b.y));
                if y > lo && y <= hi {
                    // Pixels with px < e see this piece.
                    let e = run.y.ceil().clamp(0.0, width as f64) as usize;
                    parity[e] ^= true;
                }
            }
        }
        // Suffix parity: pixel px counts pieces at e > px.
        let mut acc = false;
        for px in (0..width).rev() {
            acc ^= parity[px + 1];
            row[px] = acc as u8 as f64;
        }
    });
    Ok(mask)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Image gradient sampled at the floored segment midpoint.
    #[default]
    Midpoint,
    /// Mean image gradient over the pixels under the segment.
    Mean,
}

/// Per-segment gradients mirroring the `[N_s, 2, 2]` coordinate layout.
/// Both endpoints of segment `i` carry `scalar[i] * v_i`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EdgeGradient {
    pub grads: Vec<[[f64; 2]; 2]>,
    pub scalar: Vec<f64>,
    /// Segments whose sample point fell outside the image.
    pub out_of_bounds: Vec<usize>,
}

impl EdgeGradient {
    pub fn from_scalar(scalar: Vec<f64>, velocities: &[[f64; 2]]) -> Self {
        let grads = scalar
            .iter()
            .zip(velocities)
            .map(|(&g, v)| {
                let r = [g * v[0], g * v[1]];
                [r, r]
            })
            .collect();
        Self {
            grads,
            scalar,
            out_of_bounds: Vec::new(),
        }
    }
}

/// Projects `dL/dM` onto segment motion: `g_mid · v_i` for both endpoints,
/// where `g_mid` is read at `(⌊(x1+x2)/2⌋, ⌊(y1+y2)/2⌋)`.
pub fn compute_edge_gradients(
    dl_dm: &Grid,
    merged: &SegmentSet,
    velocities: &[[f64; 2]],
) -> EdgeGradient {
    compute_edge_gradients_with(dl_dm, merged, velocities, GradientMode::Midpoint)
}

pub fn compute_edge_gradients_with(
    dl_dm: &Grid,
    merged: &SegmentSet,
    velocities: &[[f64; 2]],
    mode: GradientMode,
) -> EdgeGradient {
    let samples: Vec<Option<f64>> = par::map_range(merged.len(), |i| {
        let (a, b) = (merged.start(i), merged.end(i));
        match mode {
            GradientMode::Midpoint => {
                let mx = ((a.x + b.x) * 0.5).floor() as i64;
                let my = ((a.y + b.y) * 0.5).floor() as i64;
                dl_dm.get_checked(mx, my)
            }
            GradientMode::Mean => {
                let n = ((b.x - a.x).abs() + (b.y - a.y).abs()).round().max(1.0) as i64;
                let (mut s, mut k) = (0.0, 0usize);
                for t in 0..n {
                    let f = (t as f64 + 0.5) / n as f64;
                    let x = (a.x + (b.x - a.x) * f).floor() as i64;
                    let y = (a.y + (b.y - a.y) * f).floor() as i64;
                    if let Some(v) = dl_dm.get_checked(x, y) {
                        s += v;
                        k += 1;
                    }
                }
                (k > 0).then(|| s / k as f64)
            }
        }
    });
    let mut out_of_bounds = Vec::new();
    let scalar = samples
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            s.unwrap_or_else(|| {
                out_of_bounds.push(i);
                0.0
            })
        })
        .collect();
    if !out_of_bounds.is_empty() {
        log::warn!(
            "{} segment midpoints fell outside the image; their gradients are zero",
            out_of_bounds.len()
        );
    }
    let mut g = EdgeGradient::from_scalar(scalar, velocities);
    g.out_of_bounds = out_of_bounds;
    g
}

/// Gradient-descent update `S ← S − lr·grad`. Segments with non-finite
/// gradients are left in place; their indices are returned.
pub fn apply_step(segset: &SegmentSet, grads: &EdgeGradient, lr: f64) -> Result<(SegmentSet, Vec<usize>)> {
    if grads.grads.len() != segset.len() {
        return Err(Error::Contract(format!(
            "gradient has {} rows for {} segments",
            grads.grads.len(),
            segset.len()
        )));
    }
    let mut out = segset.clone();
    let mut skipped = Vec::new();
    for (i, g) in grads.grads.iter().enumerate() {
        if !g.iter().flatten().all(|v| v.is_finite()) {
            skipped.push(i);
            continue;
        }
        for e in 0..2 {
            for c in 0..2 {
                out.coords[i][e][c] -= lr * g[e][c];
            }
        }
    }
    if !skipped.is_empty() {
        log::warn!("skipped {} segments with non-finite gradients", skipped.len());
    }
    Ok((out, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{segment_edges, Polygon};

    fn rect_set(x0: f64, y0: f64, x1: f64, y1: f64) -> SegmentSet {
        segment_edges(&[Polygon::rect(x0, y0, x1, y1).unwrap()], 80.0).unwrap()
    }

    #[test]
    fn predicate_by_hand() {
        // Piece from (2,3) to (8,3); p = (5,6): v1 = (3,3), v2 = (-3,3),
        // cross = 3·3 − 3·(−3) = 18 > 0 with v1.x ≥ 0, v2.x < 0 → true.
        let (s, e) = (Point::new(2.0, 3.0), Point::new(8.0, 3.0));
        assert!(check_cross(Point::new(5.0, 6.0), s, e));
        assert!(!check_cross(Point::new(5.0, 1.0), s, e));
        assert!(!check_cross(Point::new(9.0, 6.0), s, e));
        assert!(!check_cross(Point::new(5.0, 3.0), s, e));
        // Half-open span: left end in, right end out.
        assert!(check_cross(Point::new(2.0, 6.0), s, e));
        assert!(!check_cross(Point::new(8.0, 6.0), s, e));
        // Reversed piece gives the same answers.
        assert!(check_cross(Point::new(2.0, 6.0), e, s));
        assert!(!check_cross(Point::new(8.0, 6.0), e, s));
    }

    #[test]
    fn rectangle_fill_convention() {
        let m = rasterize(&rect_set(4.0, 4.0, 12.0, 12.0), 16, 16).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let inside = (4..12).contains(&x) && (5..=12).contains(&y);
                assert_eq!(m.get(x, y), inside as u8 as f64, "({x},{y})");
            }
        }
        assert_eq!(m.sum(), 64.0);
    }

    #[test]
    fn empty_set_gives_zero_mask() {
        let m = rasterize(&SegmentSet::default(), 8, 8).unwrap();
        assert_eq!(m.sum(), 0.0);
    }

    #[test]
    fn open_ring_is_rejected() {
        let mut s = rect_set(4.0, 4.0, 12.0, 12.0);
        s.coords[0][0] = [3.0, 3.0];
        assert!(matches!(rasterize(&s, 16, 16), Err(Error::Geometry(_))));
    }

    #[test]
    fn serial_parallel_and_vertical_agree() {
        let s = rect_set(3.0, 7.0, 29.0, 20.0);
        let a = rasterize(&s, 32, 32).unwrap();
        assert_eq!(a, rasterize_serial(&s, 32, 32).unwrap());
        assert_eq!(a, rasterize_vertical(&s, 32, 32).unwrap());
    }

    #[test]
    fn single_hot_pixel_hits_one_segment() {
        let s = rect_set(0.0, 0.0, 160.0, 160.0);
        let i = 3;
        let m = s.midpoint(i);
        let mut g = Grid::zeros(200, 200);
        g.set(m.x.floor() as usize, m.y.floor() as usize, 1.0);
        let eg = compute_edge_gradients(&g, &s, &s.velocities);
        for k in 0..s.len() {
            if k == i {
                assert_eq!(eg.grads[k], [s.velocities[k], s.velocities[k]]);
            } else {
                assert_eq!(eg.grads[k], [[0.0; 2]; 2]);
            }
        }
    }

    #[test]
    fn step_moves_against_gradient() {
        let s = rect_set(0.0, 0.0, 160.0, 160.0);
        let eg = EdgeGradient::from_scalar(vec![1.0; s.len()], &s.velocities);
        let (t, skipped) = apply_step(&s, &eg, 2.0).unwrap();
        assert!(skipped.is_empty());
        for i in 0..s.len() {
            let v = s.velocities[i];
            for e in 0..2 {
                assert_eq!(t.coords[i][e][0], s.coords[i][e][0] - 2.0 * v[0]);
                assert_eq!(t.coords[i][e][1], s.coords[i][e][1] - 2.0 * v[1]);
            }
            assert_eq!(t.directions[i], s.directions[i]);
        }
    }

    #[test]
    fn non_finite_gradient_is_skipped() {
        let s = rect_set(0.0, 0.0, 160.0, 160.0);
        let mut sc = vec![0.5; s.len()];
        sc[2] = f64::NAN;
        let eg = EdgeGradient::from_scalar(sc, &s.velocities);
        let (t, skipped) = apply_step(&s, &eg, 1.0).unwrap();
        assert_eq!(skipped, vec![2]);
        assert_eq!(t.coords[2], s.coords[2]);
    }
}

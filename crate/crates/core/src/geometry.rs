//! Manhattan layouts, edge segmentation and corner re-closing.
//!
//! Coordinates are nanometers on a 1 nm grid, so nm and pixels coincide.
//! Every ring is stored with material on the left of the traversal
//! direction: filled polygons counter-clockwise, holes clockwise. The
//! outward normal of any segment is therefore its right-hand normal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_arr(a: [f64; 2]) -> Self {
        Self { x: a[0], y: a[1] }
    }

    pub fn to_arr(self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Horizontal,
    Vertical,
}

impl Axis {
    /// Orientation of the axis-aligned vector `(dx, dy)`; `None` if it is
    /// diagonal or zero.
    pub fn of_vector(dx: f64, dy: f64) -> Option<Axis> {
        match (dx == 0.0, dy == 0.0) {
            (false, true) => Some(Axis::Horizontal),
            (true, false) => Some(Axis::Vertical),
            _ => None,
        }
    }

    /// Coordinate measured along a run of this orientation.
    #[inline]
    pub fn along(self, p: Point) -> f64 {
        match self {
            Axis::Horizontal => p.x,
            Axis::Vertical => p.y,
        }
    }

    /// Coordinate measured across a run of this orientation.
    #[inline]
    pub fn across(self, p: Point) -> f64 {
        match self {
            Axis::Horizontal => p.y,
            Axis::Vertical => p.x,
        }
    }

    pub fn other(self) -> Axis {
        match self {
            Axis::Horizontal => Axis::Vertical,
            Axis::Vertical => Axis::Horizontal,
        }
    }
}

/// Closed Manhattan ring; the closing edge is implicit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl TryFrom<Vec<[f64; 2]>> for Polygon {
    type Error = Error;
    fn try_from(v: Vec<[f64; 2]>) -> Result<Self> {
        Polygon::new(v.into_iter().map(Point::from_arr).collect())
    }
}

impl From<Polygon> for Vec<[f64; 2]> {
    fn from(p: Polygon) -> Self {
        p.vertices.into_iter().map(Point::to_arr).collect()
    }
}

impl Polygon {
    /// Validates a vertex ring. A repeated closing vertex is dropped.
    pub fn new(mut vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 4 {
            return Err(Error::geometry(format!(
                "polygon needs at least 4 vertices, got {}",
                vertices.len()
            )));
        }
        if let Some(p) = vertices.iter().find(|p| !p.is_finite()) {
            return Err(Error::geometry(format!("non-finite vertex {p:?}")));
        }
        let n = vertices.len();
        let mut axes = Vec::with_capacity(n);
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            if a == b {
                return Err(Error::geometry(format!("zero-length edge at vertex {i} {a:?}")));
            }
            match Axis::of_vector(b.x - a.x, b.y - a.y) {
                Some(ax) => axes.push(ax),
                None => {
                    return Err(Error::geometry(format!(
                        "non-Manhattan edge {a:?} -> {b:?}"
                    )))
                }
            }
        }
        for i in 0..n {
            if axes[i] == axes[(i + 1) % n] {
                return Err(Error::geometry(format!(
                    "edges {i} and {} are collinear; Manhattan edges must alternate",
                    (i + 1) % n
                )));
            }
        }
        let poly = Polygon { vertices };
        poly.check_simple()?;
        Ok(poly)
    }

    /// Counter-clockwise axis-aligned rectangle.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let (x0, x1) = (x0.min(x1), x0.max(x1));
        let (y0, y1) = (y0.min(y1), y0.max(y1));
        Polygon::new(vec![
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ])
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace area; positive for counter-clockwise rings.
    pub fn signed_area(&self) -> f64 {
        self.edges().map(|(a, b)| a.x * b.y - b.x * a.y).sum::<f64>() * 0.5
    }

    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            b.0 = b.0.min(p.x);
            b.1 = b.1.min(p.y);
            b.2 = b.2.max(p.x);
            b.3 = b.3.max(p.y);
        }
        b
    }

    pub fn reversed(&self) -> Polygon {
        let mut v = self.vertices.clone();
        v.reverse();
        Polygon { vertices: v }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Polygon {
        Polygon {
            vertices: self
                .vertices
                .iter()
                .map(|p| Point::new(p.x + dx, p.y + dy))
                .collect(),
        }
    }

    /// Rejects rings where two non-adjacent edges touch or cross.
    fn check_simple(&self) -> Result<()> {
        let edges: Vec<(Point, Point)> = self.edges().collect();
        let n = edges.len();
        for i in 0..n {
            for j in i + 1..n {
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                if closed_segments_touch(edges[i], edges[j]) {
                    return Err(Error::geometry(format!(
                        "ring is not simple: edges {i} and {j} touch"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn closed_segments_touch(a: (Point, Point), b: (Point, Point)) -> bool {
    let (ax0, ax1) = (a.0.x.min(a.1.x), a.0.x.max(a.1.x));
    let (ay0, ay1) = (a.0.y.min(a.1.y), a.0.y.max(a.1.y));
    let (bx0, bx1) = (b.0.x.min(b.1.x), b.0.x.max(b.1.x));
    let (by0, by1) = (b.0.y.min(b.1.y), b.0.y.max(b.1.y));
    ax0 <= bx1 && bx0 <= ax1 && ay0 <= by1 && by0 <= ay1
}

/// Even-odd membership of an arbitrary point in a set of rings.
fn inside_even_odd(polygons: &[Polygon], p: Point) -> bool {
    let mut inside = false;
    for poly in polygons {
        let v = poly.vertices();
        let n = v.len();
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (v[i], v[j]);
            if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
                inside = !inside;
            }
            j = i;
        }
    }
    inside
}

/// Probe points just left and right of the interior of edge `a -> b`.
fn side_probes(a: Point, b: Point) -> (Point, Point) {
    let len = (b.x - a.x).abs() + (b.y - a.y).abs();
    let dx = (b.x - a.x) / len;
    let dy = (b.y - a.y) / len;
    // An off-centre, off-grid probe never lands on another grid-aligned edge.
    let t = len * 0.5 + (len * 0.25).min(0.137);
    let eps = 1e-3;
    let m = Point::new(a.x + dx * t, a.y + dy * t);
    let right = Point::new(m.x + dy * eps, m.y - dx * eps);
    let left = Point::new(m.x - dy * eps, m.y + dx * eps);
    (left, right)
}

/// Reorients every ring so material lies on its left.
pub fn orient_rings(polygons: &[Polygon]) -> Result<Vec<Polygon>> {
    polygons
        .iter()
        .enumerate()
        .map(|(i, poly)| {
            let (a, b) = poly.edges().next().expect("validated polygon has edges");
            let (left, right) = side_probes(a, b);
            match (inside_even_odd(polygons, left), inside_even_odd(polygons, right)) {
                (true, false) => Ok(poly.clone()),
                (false, true) => {
                    log::warn!("polygon {i} has reversed winding; reorienting");
                    Ok(poly.reversed())
                }
                _ => Err(Error::geometry(format!(
                    "polygon {i}: interior is ambiguous (overlapping or duplicate rings)"
                ))),
            }
        })
        .collect()
}

/// Read-only view of one segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub start: Point,
    pub end: Point,
    pub direction: [f64; 2],
    pub velocity: [f64; 2],
    pub is_corner: bool,
    pub polygon_id: usize,
    pub order_in_ring: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentInfo {
    pub ring: usize,
    /// Index of the originating edge within its ring.
    pub edge: usize,
    pub order_in_ring: usize,
    pub first_in_edge: bool,
    pub last_in_edge: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    /// Segment indices in traversal order.
    pub segments: Vec<usize>,
    pub hole: bool,
    pub sraf: bool,
}

/// Learnable edge parameters: `coords[i] = [start, end]` as `[x, y]` pairs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentSet {
    pub coords: Vec<[[f64; 2]; 2]>,
    pub directions: Vec<[f64; 2]>,
    pub velocities: Vec<[f64; 2]>,
    pub corner_flags: Vec<bool>,
    pub info: Vec<SegmentInfo>,
    pub rings: Vec<Ring>,
}

/// A straight run of a ring boundary: either a segment or the implicit
/// connector joining two consecutive segments inside one original edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Piece {
    pub a: Point,
    pub b: Point,
    pub ring: usize,
    pub kind: PieceKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PieceKind {
    Segment(usize),
    /// Connector from the end of segment `after` to the start of its successor.
    Connector { after: usize },
}

impl SegmentSet {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn start(&self, i: usize) -> Point {
        Point::from_arr(self.coords[i][0])
    }

    #[inline]
    pub fn end(&self, i: usize) -> Point {
        Point::from_arr(self.coords[i][1])
    }

    #[inline]
    pub fn axis(&self, i: usize) -> Axis {
        if self.directions[i][1] == 0.0 {
            Axis::Horizontal
        } else {
            Axis::Vertical
        }
    }

    pub fn midpoint(&self, i: usize) -> Point {
        let (a, b) = (self.start(i), self.end(i));
        Point::new((a.x + b.x) * 0.5, (a.y + b.y) * 0.5)
    }

    pub fn segment(&self, i: usize) -> Segment {
        Segment {
            start: self.start(i),
            end: self.end(i),
            direction: self.directions[i],
            velocity: self.velocities[i],
            is_corner: self.corner_flags[i],
            polygon_id: self.info[i].ring,
            order_in_ring: self.info[i].order_in_ring,
        }
    }

    /// Successor of segment `i` in its ring.
    pub fn next_in_ring(&self, i: usize) -> usize {
        let info = self.info[i];
        let ring = &self.rings[info.ring].segments;
        ring[(info.order_in_ring + 1) % ring.len()]
    }

    pub fn is_sraf(&self, i: usize) -> bool {
        self.rings[self.info[i].ring].sraf
    }

    pub fn is_integral(&self) -> bool {
        self.coords
            .iter()
            .flatten()
            .flatten()
            .all(|v| v.fract() == 0.0)
    }

    /// Boundary pieces of every ring in traversal order. Connectors of zero
    /// length are kept only if `keep_empty` is set.
    pub fn boundary_pieces(&self, keep_empty: bool) -> Vec<Piece> {
        let mut out = Vec::with_capacity(self.len() * 2);
        for (r, ring) in self.rings.iter().enumerate() {
            let n = ring.segments.len();
            for k in 0..n {
                let i = ring.segments[k];
                let j = ring.segments[(k + 1) % n];
                out.push(Piece {
                    a: self.start(i),
                    b: self.end(i),
                    ring: r,
                    kind: PieceKind::Segment(i),
                });
                let (e, s) = (self.end(i), self.start(j));
                let corner = self.info[i].last_in_edge && self.info[j].first_in_edge;
                if e != s || (keep_empty && !corner) {
                    out.push(Piece {
                        a: e,
                        b: s,
                        ring: r,
                        kind: PieceKind::Connector { after: i },
                    });
                }
            }
        }
        out
    }

    /// Checks that every ring is a closed Manhattan chain: corner junctions
    /// coincide and in-edge junctions are bridged by axis-aligned jogs.
    pub fn check_closed(&self) -> Result<()> {
        for (r, ring) in self.rings.iter().enumerate() {
            let n = ring.segments.len();
            for k in 0..n {
                let i = ring.segments[k];
                let j = ring.segments[(k + 1) % n];
                let (e, s) = (self.end(i), self.start(j));
                let corner = self.info[i].last_in_edge && self.info[j].first_in_edge;
                if corner && e != s {
                    return Err(Error::geometry(format!(
                        "ring {r} is open at the corner between segments {i} and {j}: {e:?} vs {s:?}"
                    )));
                }
                if !corner && e.x != s.x && e.y != s.y {
                    return Err(Error::geometry(format!(
                        "ring {r}: segments {i} and {j} are not joined by an axis-aligned jog"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Appends another set, shifting its ring and segment indices.
    pub fn append(&mut self, other: &SegmentSet, sraf: bool) {
        let base = self.len();
        let ring_base = self.rings.len();
        self.coords.extend_from_slice(&other.coords);
        self.directions.extend_from_slice(&other.directions);
        self.velocities.extend_from_slice(&other.velocities);
        self.corner_flags.extend_from_slice(&other.corner_flags);
        self.info.extend(other.info.iter().map(|inf| SegmentInfo {
            ring: inf.ring + ring_base,
            ..*inf
        }));
        self.rings.extend(other.rings.iter().map(|r| Ring {
            segments: r.segments.iter().map(|s| s + base).collect(),
            hole: r.hole,
            sraf: r.sraf || sraf,
        }));
    }

    /// Copy without the listed rings; remaining indices are compacted.
    pub fn without_rings(&self, drop: &[usize]) -> SegmentSet {
        let mut out = SegmentSet::default();
        for (r, ring) in self.rings.iter().enumerate() {
            if drop.contains(&r) {
                continue;
            }
            let base = out.len();
            let new_ring = out.rings.len();
            for &i in &ring.segments {
                out.coords.push(self.coords[i]);
                out.directions.push(self.directions[i]);
                out.velocities.push(self.velocities[i]);
                out.corner_flags.push(self.corner_flags[i]);
                out.info.push(SegmentInfo {
                    ring: new_ring,
                    ..self.info[i]
                });
            }
            out.rings.push(Ring {
                segments: (base..base + ring.segments.len()).collect(),
                hole: ring.hole,
                sraf: ring.sraf,
            });
        }
        out
    }

    /// Vertex chain of ring `r` (segment endpoints in order, connectors
    /// implied between consecutive entries).
    pub fn ring_chain(&self, r: usize) -> Vec<Point> {
        let mut pts = Vec::new();
        for &i in &self.rings[r].segments {
            pts.push(self.start(i));
            pts.push(self.end(i));
        }
        pts
    }

    /// Largest per-endpoint displacement from `other` (same layout).
    pub fn max_displacement(&self, other: &SegmentSet) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .flat_map(|(a, b)| {
                (0..2).map(move |e| {
                    (a[e][0] - b[e][0]).abs().max((a[e][1] - b[e][1]).abs())
                })
            })
            .fold(0.0, f64::max)
    }
}

/// Cut positions (distances from the edge start) partitioning an edge of
/// length `len` into pieces no longer than `seg_length`, symmetric about
/// the midpoint, with pieces shorter than `min_length` merged into their
/// shorter neighbour (ties to the preceding piece).
pub fn partition_edge(len: f64, seg_length: f64, min_length: f64) -> Vec<(f64, f64)> {
    let half = len * 0.5;
    let mut cuts: Vec<f64> = Vec::new();
    if len <= 2.0 * seg_length {
        cuts.push(half);
    } else {
        // Form A: cuts at half ± k·s. If the end pieces would fall below s/2,
        // switch to form B: a centred piece with cuts at half ± (k+½)·s.
        let k_a = ((half / seg_length).ceil() as i64 - 1).max(0);
        let rem_a = half - k_a as f64 * seg_length;
        if rem_a >= seg_length * 0.5 {
            for k in -k_a..=k_a {
                cuts.push(half + k as f64 * seg_length);
            }
        } else {
            let k_b = k_a - 1;
            for k in 0..=k_b {
                let off = (k as f64 + 0.5) * seg_length;
                cuts.push(half - off);
                cuts.push(half + off);
            }
        }
    }
    cuts.retain(|&c| c > 0.0 && c < len);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut pieces: Vec<(f64, f64)> = Vec::with_capacity(cuts.len() + 1);
    let mut prev = 0.0;
    for c in cuts.into_iter().chain(std::iter::once(len)) {
        pieces.push((prev, c));
        prev = c;
    }

    // Defensive: anything still over-long is halved.
    let mut i = 0;
    while i < pieces.len() {
        let (a, b) = pieces[i];
        if b - a > seg_length {
            let m = (a + b) * 0.5;
            pieces[i] = (a, m);
            pieces.insert(i + 1, (m, b));
        } else {
            i += 1;
        }
    }

    while pieces.len() > 1 {
        let Some(i) = pieces.iter().position(|(a, b)| b - a < min_length) else {
            break;
        };
        let prev_len = if i > 0 { Some(pieces[i - 1].1 - pieces[i - 1].0) } else { None };
        let next_len = pieces.get(i + 1).map(|(a, b)| b - a);
        let into_prev = match (prev_len, next_len) {
            (Some(p), Some(n)) => p <= n,
            (Some(_), None) => true,
            _ => false,
        };
        if into_prev {
            pieces[i - 1].1 = pieces[i].1;
        } else {
            pieces[i + 1].0 = pieces[i].0;
        }
        pieces.remove(i);
    }
    pieces
}

/// Default minimum segment length: the minimum-width rule constant.
pub const DEFAULT_MIN_SEGMENT: f64 = 40.0;

/// Segments polygon edges with the default minimum segment length.
pub fn segment_edges(polygons: &[Polygon], seg_length: f64) -> Result<SegmentSet> {
    segment_edges_with_min(polygons, seg_length, DEFAULT_MIN_SEGMENT)
}

pub fn segment_edges_with_min(
    polygons: &[Polygon],
    seg_length: f64,
    min_length: f64,
) -> Result<SegmentSet> {
    if !(seg_length > 0.0 && seg_length.is_finite()) {
        return Err(Error::config(format!("seg_length must be positive, got {seg_length}")));
    }
    if !(min_length >= 0.0) {
        return Err(Error::config(format!("min segment length must be >= 0, got {min_length}")));
    }
    let oriented = orient_rings(polygons)?;
    let per_ring: Vec<SegmentSet> = par::map_slice(&oriented, |poly| {
        segment_ring(poly, seg_length, min_length)
    });
    let mut out = SegmentSet::default();
    for (r, s) in per_ring.iter().enumerate() {
        out.append(s, false);
        out.rings[r].hole = oriented[r].signed_area() < 0.0;
    }
    assign_velocities(&out, &oriented)
}

fn segment_ring(poly: &Polygon, seg_length: f64, min_length: f64) -> SegmentSet {
    let mut set = SegmentSet::default();
    let mut ring = Vec::new();
    for (e, (a, b)) in poly.edges().enumerate() {
        let len = (b.x - a.x).abs() + (b.y - a.y).abs();
        let d = [(b.x - a.x) / len, (b.y - a.y) / len];
        let pieces = partition_edge(len, seg_length, min_length);
        let np = pieces.len();
        for (k, (t0, t1)) in pieces.into_iter().enumerate() {
            let at = |t: f64| {
                if t == len {
                    b.to_arr()
                } else {
                    [a.x + d[0] * t, a.y + d[1] * t]
                }
            };
            let i = set.coords.len();
            set.coords.push([at(t0), at(t1)]);
            set.directions.push(d);
            set.velocities.push([d[1], -d[0]]);
            set.corner_flags.push(k == 0 || k + 1 == np);
            set.info.push(SegmentInfo {
                ring: 0,
                edge: e,
                order_in_ring: i,
                first_in_edge: k == 0,
                last_in_edge: k + 1 == np,
            });
            ring.push(i);
        }
    }
    set.rings.push(Ring {
        segments: ring,
        hole: false,
        sraf: false,
    });
    set
}

/// Sets each velocity to the unit outward normal of its segment, judged by
/// even-odd membership of probes on either side.
pub fn assign_velocities(segset: &SegmentSet, polygons: &[Polygon]) -> Result<SegmentSet> {
    let mut out = segset.clone();
    for i in 0..segset.len() {
        let (a, b) = (segset.start(i), segset.end(i));
        if a == b {
            return Err(Error::geometry(format!("segment {i} has zero length")));
        }
        let (left, right) = side_probes(a, b);
        let d = segset.directions[i];
        out.velocities[i] = match (inside_even_odd(polygons, left), inside_even_odd(polygons, right)) {
            (true, false) => [d[1], -d[0]],
            (false, true) => [-d[1], d[0]],
            _ => {
                return Err(Error::geometry(format!(
                    "segment {i}: interior side is ambiguous"
                )))
            }
        };
    }
    Ok(out)
}

/// Rounds every coordinate to the grid, half away from zero. The backward
/// pass of this rounding is the identity (see [`ste_backward`]).
pub fn ste_round(segset: &SegmentSet) -> SegmentSet {
    let mut out = segset.clone();
    for c in out.coords.iter_mut().flatten().flatten() {
        *c = c.round();
    }
    out
}

/// Straight-through gradient of [`ste_round`].
pub fn ste_backward(grad: &[[[f64; 2]; 2]]) -> Vec<[[f64; 2]; 2]> {
    grad.to_vec()
}

/// Re-closes rings at original polygon corners: the last segment of each
/// edge and the first segment of the next meet at
/// `(x of the vertical one, y of the horizontal one)`.
pub fn merge_corners(rounded: &SegmentSet) -> Result<SegmentSet> {
    debug_assert!(rounded.is_integral(), "merge_corners expects grid-aligned input");
    let mut out = rounded.clone();
    for ring in &rounded.rings {
        let n = ring.segments.len();
        for k in 0..n {
            let i = ring.segments[k];
            let j = ring.segments[(k + 1) % n];
            if !(rounded.info[i].last_in_edge && rounded.info[j].first_in_edge) {
                continue;
            }
            let p = match (rounded.axis(i), rounded.axis(j)) {
                (Axis::Vertical, Axis::Horizontal) => [rounded.coords[i][0][0], rounded.coords[j][0][1]],
                (Axis::Horizontal, Axis::Vertical) => [rounded.coords[j][0][0], rounded.coords[i][0][1]],
                _ => {
                    return Err(Error::geometry(format!(
                        "corner segments {i} and {j} are parallel and cannot be joined"
                    )))
                }
            };
            out.coords[i][1] = p;
            out.coords[j][0] = p;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(s: f64) -> Polygon {
        Polygon::rect(0.0, 0.0, s, s).unwrap()
    }

    #[test]
    fn rejects_bad_polygons() {
        let diag = vec![
            Point::new(0.0, 0.0),
            Point::new(10.0, 0.0),
            Point::new(10.0, 10.0),
            Point::new(1.0, 9.0),
        ];
        assert!(matches!(Polygon::new(diag), Err(Error::Geometry(_))));
        let dup = vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 0.0),
            Point::new(10.0, 0.0),
            Point::new(10.0, 10.0),
            Point::new(0.0, 10.0),
        ];
        assert!(Polygon::new(dup).is_err());
        assert!(Polygon::new(vec![Point::new(0.0, 0.0); 3]).is_err());
    }

    #[test]
    fn rejects_self_touching_ring() {
        // Figure-eight made of two squares touching at a vertex.
        let pts = [(0, 0), (10, 0), (10, 10), (20, 10), (20, 20), (10, 20), (10, 10), (0, 10)];
        let v = pts.iter().map(|&(x, y)| Point::new(x as f64, y as f64)).collect();
        assert!(Polygon::new(v).is_err());
    }

    #[test]
    fn edge_of_120_splits_at_midpoint() {
        assert_eq!(partition_edge(120.0, 80.0, 40.0), vec![(0.0, 60.0), (60.0, 120.0)]);
    }

    #[test]
    fn edge_of_160_gives_two_80s() {
        assert_eq!(partition_edge(160.0, 80.0, 40.0), vec![(0.0, 80.0), (80.0, 160.0)]);
    }

    #[test]
    fn long_edges_are_symmetric_and_bounded() {
        for len in [161.0, 200.0, 250.0, 300.0, 400.0, 401.0, 1000.0] {
            let p = partition_edge(len, 80.0, 40.0);
            assert_eq!(p.first().unwrap().0, 0.0);
            assert_eq!(p.last().unwrap().1, len);
            for w in p.windows(2) {
                assert_eq!(w[0].1, w[1].0);
            }
            let lens: Vec<f64> = p.iter().map(|(a, b)| b - a).collect();
            let rev: Vec<f64> = lens.iter().rev().copied().collect();
            assert_eq!(lens, rev, "len {len}");
            assert!(lens.iter().all(|l| (40.0..=80.0).contains(l)), "len {len}: {lens:?}");
        }
    }

    #[test]
    fn short_edges_merge_to_one_segment() {
        assert_eq!(partition_edge(70.0, 80.0, 40.0), vec![(0.0, 70.0)]);
        assert_eq!(partition_edge(20.0, 80.0, 11.0), vec![(0.0, 20.0)]);
        assert_eq!(partition_edge(20.0, 80.0, 10.0), vec![(0.0, 10.0), (10.0, 20.0)]);
    }

    #[test]
    fn square_velocities_point_outward() {
        let s = segment_edges(&[square(400.0)], 80.0).unwrap();
        for i in 0..s.len() {
            let m = s.midpoint(i);
            let v = s.velocities[i];
            let d = s.directions[i];
            assert_eq!(v[0] * d[0] + v[1] * d[1], 0.0);
            if m.y == 400.0 {
                assert_eq!(v, [0.0, 1.0]);
            }
            if m.x == 0.0 {
                assert_eq!(v, [-1.0, 0.0]);
            }
        }
        assert!(s.check_closed().is_ok());
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let s = segment_edges(&[square(200.0).reversed()], 80.0).unwrap();
        for i in 0..s.len() {
            let m = s.midpoint(i);
            if m.y == 200.0 {
                assert_eq!(s.velocities[i], [0.0, 1.0]);
            }
        }
    }

    #[test]
    fn hole_ring_normals_point_into_hole() {
        let outer = square(300.0);
        let inner = Polygon::rect(100.0, 100.0, 200.0, 200.0).unwrap().reversed();
        let s = segment_edges(&[outer, inner], 80.0).unwrap();
        assert!(s.rings[1].hole);
        for &i in &s.rings[1].segments {
            let m = s.midpoint(i);
            let v = s.velocities[i];
            // Outward from material = towards the hole centre.
            let to_centre = [150.0 - m.x, 150.0 - m.y];
            assert!(v[0] * to_centre[0] + v[1] * to_centre[1] > 0.0);
        }
    }

    #[test]
    fn merge_corner_example() {
        // Vertical segment ending at (100, 200) followed by a horizontal one
        // starting at (96, 204) meet at (100, 204).
        let poly = Polygon::rect(30.0, 130.0, 100.0, 200.0).unwrap();
        let mut s = segment_edges(&[poly], 80.0).unwrap();
        // Ring order: bottom, right, top, left; 70-long edges stay whole.
        let right = s.rings[0].segments[1];
        let top = s.rings[0].segments[2];
        assert_eq!(s.axis(right), Axis::Vertical);
        s.coords[right][1] = [100.0, 200.0];
        s.coords[top][0] = [96.0, 204.0];
        s.coords[top][1][1] = 204.0;
        let m = merge_corners(&s).unwrap();
        assert_eq!(m.coords[right][1], [100.0, 204.0]);
        assert_eq!(m.coords[top][0], [100.0, 204.0]);
        assert_eq!(merge_corners(&m).unwrap(), m);
    }

    #[test]
    fn ste_round_half_away_from_zero() {
        let mut s = segment_edges(&[square(160.0)], 80.0).unwrap();
        s.coords[0][0] = [2.5, -2.5];
        s.coords[0][1] = [2.7, 2.0];
        let r = ste_round(&s);
        assert_eq!(r.coords[0], [[3.0, -3.0], [3.0, 2.0]]);
        let g = vec![[[0.25, -1.0], [3.0, 0.0]]];
        assert_eq!(ste_backward(&g), g);
    }

    #[test]
    fn without_rings_compacts() {
        let s = segment_edges(&[square(100.0), Polygon::rect(200.0, 0.0, 300.0, 100.0).unwrap()], 80.0).unwrap();
        let t = s.without_rings(&[0]);
        assert_eq!(t.rings.len(), 1);
        assert_eq!(t.len(), s.rings[1].segments.len());
        assert!(t.check_closed().is_ok());
    }
}

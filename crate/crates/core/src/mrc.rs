//! Mask-rule constraints: check-pair extraction and velocity gating for the
//! optimizer, plus an independent brute-force rule checker.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Axis, PieceKind, Point, SegmentSet};
use crate::litho::sigmoid;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MrcRuleSet {
    pub min_width: f64,
    pub min_spacing: f64,
    pub eol_spacing: f64,
    pub notch_spacing: f64,
    pub jog_spacing: f64,
    /// Gate steepness.
    pub beta: f64,
    /// Minimum width inside assist features.
    pub sraf_min_width: f64,
    /// Edges up to this long with convex corners at both ends are line ends.
    pub eol_width: f64,
}

impl Default for MrcRuleSet {
    fn default() -> Self {
        Self {
            min_width: 40.0,
            min_spacing: 40.0,
            eol_spacing: 45.0,
            notch_spacing: 45.0,
            jog_spacing: 45.0,
            beta: 50.0,
            sraf_min_width: 10.0,
            eol_width: 80.0,
        }
    }
}

impl MrcRuleSet {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("min_width", self.min_width),
            ("min_spacing", self.min_spacing),
            ("eol_spacing", self.eol_spacing),
            ("notch_spacing", self.notch_spacing),
            ("jog_spacing", self.jog_spacing),
            ("beta", self.beta),
            ("sraf_min_width", self.sraf_min_width),
            ("eol_width", self.eol_width),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("rule `{name}` must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn largest_constant(&self) -> f64 {
        [self.min_width, self.min_spacing, self.eol_spacing, self.notch_spacing, self.jog_spacing]
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// Pair search radius: twice the largest rule constant.
    pub fn search_radius(&self) -> f64 {
        2.0 * self.largest_constant()
    }

    /// Strictest spacing constant. Live edges can turn into line ends or
    /// jogs as they move, so every spacing pair is gated at this value.
    pub fn gate_spacing(&self) -> f64 {
        [self.min_spacing, self.eol_spacing, self.notch_spacing, self.jog_spacing]
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn required(&self, class: RuleClass) -> f64 {
        match class {
            RuleClass::MinWidth => self.min_width,
            RuleClass::SrafWidth => self.sraf_min_width,
            RuleClass::MinSpacing => self.min_spacing,
            RuleClass::EolSpacing => self.eol_spacing,
            RuleClass::NotchSpacing => self.notch_spacing,
            RuleClass::JogSpacing => self.jog_spacing,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Spacing,
    Width,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleClass {
    MinWidth,
    SrafWidth,
    MinSpacing,
    EolSpacing,
    NotchSpacing,
    JogSpacing,
}

impl RuleClass {
    pub fn kind(self) -> CheckKind {
        match self {
            RuleClass::MinWidth | RuleClass::SrafWidth => CheckKind::Width,
            _ => CheckKind::Spacing,
        }
    }
}

/// Axis along which a pair's gap is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapAxis {
    X,
    Y,
}

impl GapAxis {
    fn across(orientation: Axis) -> Self {
        match orientation {
            Axis::Horizontal => GapAxis::Y,
            Axis::Vertical => GapAxis::X,
        }
    }
}

/// Two parallel boundary pieces facing each other. `seg_a` is always a
/// movable segment; the partner is a segment or a connector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckPair {
    pub seg_a: usize,
    pub seg_b: Option<usize>,
    pub partner: PieceKind,
    pub kind: CheckKind,
    pub class: RuleClass,
    pub axis: GapAxis,
    pub gap: f64,
    pub required: f64,
}

#[derive(Clone, Copy, Debug)]
struct Run {
    kind: PieceKind,
    ring: usize,
    orient: Axis,
    pos: f64,
    lo: f64,
    hi: f64,
    /// Outward sign along the gap axis; 0 for connectors that may open in
    /// either direction (in-edge cuts, and empty corner joins).
    out: i8,
    movable: Option<usize>,
}

fn runs_of(segset: &SegmentSet) -> Vec<Run> {
    segset
        .boundary_pieces(true)
        .into_iter()
        .map(|p| {
            let (dx, dy) = (p.b.x - p.a.x, p.b.y - p.a.y);
            let (orient, out, movable) = match p.kind {
                PieceKind::Segment(i) => {
                    let o = segset.axis(i);
                    let v = segset.velocities[i];
                    let s = match o {
                        Axis::Horizontal => v[1],
                        Axis::Vertical => v[0],
                    };
                    (o, s.signum() as i8, Some(i))
                }
                // A cut between two pieces of one edge flips direction as soon
                // as either piece overtakes the other, so it faces both ways.
                PieceKind::Connector { after } if !segset.info[after].last_in_edge => {
                    (segset.axis(after).other(), 0, None)
                }
                PieceKind::Connector { after } => match Axis::of_vector(dx, dy) {
                    Some(o) => {
                        // Material on the left: outward is the right-hand normal.
                        let s = match o {
                            Axis::Horizontal => -dx,
                            Axis::Vertical => dy,
                        };
                        (o, s.signum() as i8, None)
                    }
                    // A closed in-edge cut can only open perpendicular to its edge.
                    None => (segset.axis(after).other(), 0, None),
                },
            };
            Run {
                kind: p.kind,
                ring: p.ring,
                orient,
                pos: orient.across(p.a),
                lo: orient.along(p.a).min(orient.along(p.b)),
                hi: orient.along(p.a).max(orient.along(p.b)),
                out,
                movable,
            }
        })
        .collect()
}

/// Facing pairs with span overlap `> 0` and gap within `search_radius`.
pub fn extract_check_pairs(segset: &SegmentSet, rules: &MrcRuleSet, search_radius: f64) -> Vec<CheckPair> {
    extract_check_pairs_with_margin(segset, rules, search_radius, 0.0)
}

/// As [`extract_check_pairs`], but spans are compared after widening by
/// `margin` so pieces about to overlap are already paired.
pub fn extract_check_pairs_with_margin(
    segset: &SegmentSet,
    rules: &MrcRuleSet,
    search_radius: f64,
    margin: f64,
) -> Vec<CheckPair> {
    let runs = runs_of(segset);
    let seg_runs: Vec<usize> = (0..runs.len()).filter(|&k| runs[k].movable.is_some()).collect();
    let per: Vec<Vec<CheckPair>> = crate::par::map_slice(&seg_runs, |&a| {
        let ra = runs[a];
        let ia = ra.movable.expect("segment run");
        let mut out = Vec::new();
        for rb in &runs {
            if rb.orient != ra.orient {
                continue;
            }
            if let Some(ib) = rb.movable {
                if ib <= ia {
                    continue;
                }
            }
            let delta = rb.pos - ra.pos;
            if delta == 0.0 || delta.abs() > search_radius {
                continue;
            }
            let overlap = ra.hi.min(rb.hi) - ra.lo.max(rb.lo);
            if overlap <= -margin || (margin == 0.0 && overlap <= 0.0) {
                continue;
            }
            if rb.out != 0 && rb.out != -ra.out {
                continue;
            }
            let outward_side = (delta > 0.0) == (ra.out > 0);
            let class = if outward_side {
                if rb.ring == ra.ring {
                    RuleClass::NotchSpacing
                } else if rb.movable.is_none() {
                    RuleClass::JogSpacing
                } else {
                    RuleClass::MinSpacing
                }
            } else if segset.rings[ra.ring].sraf && segset.rings[rb.ring].sraf {
                RuleClass::SrafWidth
            } else {
                RuleClass::MinWidth
            };
            out.push(CheckPair {
                seg_a: ia,
                seg_b: rb.movable,
                partner: rb.kind,
                kind: class.kind(),
                class,
                axis: GapAxis::across(ra.orient),
                gap: delta.abs(),
                required: rules.required(class),
            });
        }
        out
    });
    per.into_iter().flatten().collect()
}

/// `τ = σ(β (proj δ − D))`.
#[inline]
pub fn gate_factor(proj: f64, d: f64, beta: f64) -> f64 {
    sigmoid(beta * (proj - d))
}

/// Gated velocity `v · τ`, where `proj δ` is the component of `delta` along
/// the velocity axis.
pub fn velocity_gate(v: [f64; 2], delta: [f64; 2], d: f64, beta: f64) -> [f64; 2] {
    let proj = if v[0] != 0.0 { delta[0].abs() } else { delta[1].abs() };
    let t = gate_factor(proj, d, beta);
    [v[0] * t, v[1] * t]
}

/// Per-segment gate factors: `out` damps outward motion (spacing pairs),
/// `inward` damps inward motion (width pairs). Multiple pairs compose by
/// taking the minimum.
#[derive(Clone, Debug, PartialEq)]
pub struct Gates {
    pub outward: Vec<f64>,
    pub inward: Vec<f64>,
}

pub fn compute_gates(n: usize, pairs: &[CheckPair], rules: &MrcRuleSet, margin: f64) -> Gates {
    let mut g = Gates {
        outward: vec![1.0; n],
        inward: vec![1.0; n],
    };
    for p in pairs {
        let d = match p.kind {
            CheckKind::Spacing => rules.gate_spacing(),
            CheckKind::Width => p.required,
        } + margin;
        let t = gate_factor(p.gap, d, rules.beta);
        let slot = match p.kind {
            CheckKind::Spacing => &mut g.outward,
            CheckKind::Width => &mut g.inward,
        };
        for s in std::iter::once(p.seg_a).chain(p.seg_b) {
            slot[s] = slot[s].min(t);
        }
    }
    g
}

/// Scales each scalar edge gradient by the gate that opposes its motion.
/// The step is `−lr · g · v`, so `g < 0` moves outward and `g > 0` inward.
/// Returns the number of segments damped below 0.99.
pub fn apply_gates(scalar: &mut [f64], gates: &Gates) -> usize {
    let mut active = 0;
    for (i, g) in scalar.iter_mut().enumerate() {
        let t = if *g < 0.0 {
            gates.outward[i]
        } else if *g > 0.0 {
            gates.inward[i]
        } else {
            1.0
        };
        if t < 0.99 {
            active += 1;
        }
        *g *= t;
    }
    active
}

/// One rule finding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: RuleClass,
    pub segments: Vec<usize>,
    pub measured: f64,
    pub required: f64,
}

#[derive(Clone, Debug)]
struct Edge {
    a: Point,
    b: Point,
    ring: usize,
    segments: Vec<usize>,
}

/// Maximal straight edges of each ring, rebuilt from the segment chain.
fn ring_edges(segset: &SegmentSet) -> Vec<Edge> {
    let mut out = Vec::new();
    for (r, ring) in segset.rings.iter().enumerate() {
        // Chain of (point, segment that ends at the next point).
        let mut pts: Vec<(Point, Option<usize>)> = Vec::new();
        for &i in &ring.segments {
            pts.push((segset.start(i), Some(i)));
            pts.push((segset.end(i), None));
        }
        pts.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 = a.1.or(b.1);
                true
            } else {
                false
            }
        });
        while pts.len() > 1 && pts.first().map(|p| p.0) == pts.last().map(|p| p.0) {
            let last = pts.pop().expect("non-empty");
            pts[0].1 = pts[0].1.or(last.1);
        }
        let n = pts.len();
        if n < 2 {
            continue;
        }
        let mut edges: Vec<Edge> = (0..n)
            .map(|k| Edge {
                a: pts[k].0,
                b: pts[(k + 1) % n].0,
                ring: r,
                segments: pts[k].1.into_iter().collect(),
            })
            .collect();
        // Merge consecutive collinear edges (cyclically).
        let collinear = |e: &Edge, f: &Edge| {
            (e.a.x == e.b.x && f.a.x == f.b.x && e.a.x == f.a.x) || (e.a.y == e.b.y && f.a.y == f.b.y && e.a.y == f.a.y)
        };
        let mut changed = true;
        while changed && edges.len() > 1 {
            changed = false;
            let m = edges.len();
            for k in 0..m {
                let j = (k + 1) % m;
                if collinear(&edges[k], &edges[j]) {
                    let nb = edges[j].b;
                    let segs = edges[j].segments.clone();
                    edges[k].b = nb;
                    edges[k].segments.extend(segs);
                    edges.remove(j);
                    changed = true;
                    break;
                }
            }
        }
        edges.retain(|e| e.a != e.b);
        out.extend(edges);
    }
    out
}

fn inside_chains(edges: &[Edge], p: Point) -> bool {
    let mut inside = false;
    for e in edges {
        if (e.a.y > p.y) != (e.b.y > p.y) {
            let x = e.a.x + (p.y - e.a.y) * (e.b.x - e.a.x) / (e.b.y - e.a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Brute-force rule check over the maximal edges of the merged geometry.
/// Orientation is probed by even-odd membership, visibility by sweeping
/// the edges that lie strictly between a candidate pair.
pub fn check_violations(merged: &SegmentSet, rules: &MrcRuleSet) -> Vec<Violation> {
    let edges = ring_edges(merged);
    struct Info {
        vertical: bool,
        pos: f64,
        lo: f64,
        hi: f64,
        out: f64,
        len: f64,
        eol: bool,
        sraf: bool,
    }
    let n = edges.len();
    let mut outs = vec![0.0f64; n];
    for (k, e) in edges.iter().enumerate() {
        let (dx, dy) = (e.b.x - e.a.x, e.b.y - e.a.y);
        let len = dx.abs() + dy.abs();
        // Off-centre along the edge so the probe never hits a grid-aligned vertex.
        let m = Point::new(e.a.x + dx * (0.5 + 0.123 / len), e.a.y + dy * (0.5 + 0.123 / len));
        let r = Point::new(dy / len * 1e-3, -dx / len * 1e-3);
        let right_in = inside_chains(&edges, Point::new(m.x + r.x, m.y + r.y));
        // Outward normal sign along the gap axis.
        let right_sign = if dx == 0.0 { dy.signum() } else { -dx.signum() };
        outs[k] = if right_in { -right_sign } else { right_sign };
    }
    let ring_of: Vec<Vec<usize>> = {
        let mut v = vec![Vec::new(); merged.rings.len()];
        for (k, e) in edges.iter().enumerate() {
            v[e.ring].push(k);
        }
        v
    };
    let infos: Vec<Info> = edges
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let vertical = e.a.x == e.b.x;
            let (pos, lo, hi) = if vertical {
                (e.a.x, e.a.y.min(e.b.y), e.a.y.max(e.b.y))
            } else {
                (e.a.y, e.a.x.min(e.b.x), e.a.x.max(e.b.x))
            };
            // Convex corner: the neighbouring edge heads against this edge's outward normal.
            let ring = &ring_of[e.ring];
            let at = ring.iter().position(|&q| q == k).expect("edge in ring");
            let prev = &edges[ring[(at + ring.len() - 1) % ring.len()]];
            let next = &edges[ring[(at + 1) % ring.len()]];
            let across = |f: &Edge| if vertical { (f.b.x - f.a.x).signum() } else { (f.b.y - f.a.y).signum() };
            let next_convex = across(next) == -outs[k];
            let prev_convex = across(prev) == outs[k];
            Info {
                vertical,
                pos,
                lo,
                hi,
                out: outs[k],
                len: hi - lo,
                eol: hi - lo <= rules.eol_width && next_convex && prev_convex,
                sraf: merged.rings.get(e.ring).map(|r| r.sraf).unwrap_or(false),
            }
        })
        .collect();

    let mut found = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&infos[i], &infos[j]);
            if a.vertical != b.vertical || a.pos == b.pos {
                continue;
            }
            let lo = a.lo.max(b.lo);
            let hi = a.hi.min(b.hi);
            if hi <= lo || b.out != -a.out {
                continue;
            }
            let gap = (b.pos - a.pos).abs();
            let b_outside_a = ((b.pos - a.pos) > 0.0) == (a.out > 0.0);
            let class = if b_outside_a {
                if edges[i].ring == edges[j].ring {
                    RuleClass::NotchSpacing
                } else if a.eol || b.eol {
                    RuleClass::EolSpacing
                } else if a.len < rules.jog_spacing || b.len < rules.jog_spacing {
                    RuleClass::JogSpacing
                } else {
                    RuleClass::MinSpacing
                }
            } else if a.sraf && b.sraf {
                RuleClass::SrafWidth
            } else {
                RuleClass::MinWidth
            };
            let required = rules.required(class);
            if gap >= required {
                continue;
            }
            // Visible if edges strictly between do not cover the overlap.
            let (p0, p1) = (a.pos.min(b.pos), a.pos.max(b.pos));
            let mut blocks: Vec<(f64, f64)> = infos
                .iter()
                .filter(|c| c.vertical == a.vertical && c.pos > p0 && c.pos < p1)
                .filter_map(|c| {
                    let (l, h) = (c.lo.max(lo), c.hi.min(hi));
                    (h > l).then_some((l, h))
                })
                .collect();
            blocks.sort_by(|x, y| x.0.total_cmp(&y.0));
            let mut reach = lo;
            let mut visible = false;
            for (l, h) in blocks {
                if l > reach {
                    visible = true;
                    break;
                }
                reach = reach.max(h);
            }
            if !visible && reach < hi {
                visible = true;
            }
            if !visible {
                continue;
            }
            let mut segments: Vec<usize> = edges[i].segments.iter().chain(&edges[j].segments).copied().collect();
            segments.sort_unstable();
            segments.dedup();
            found.push(Violation {
                kind: class,
                segments,
                measured: gap,
                required,
            });
        }
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{segment_edges, Polygon};

    fn two_lines(gap: f64) -> SegmentSet {
        let a = Polygon::rect(0.0, 0.0, 60.0, 400.0).unwrap();
        let b = Polygon::rect(60.0 + gap, 0.0, 120.0 + gap, 400.0).unwrap();
        segment_edges(&[a, b], 80.0).unwrap()
    }

    #[test]
    fn gate_reference_values() {
        assert_eq!(gate_factor(40.0, 40.0, 50.0), 0.5);
        assert!((gate_factor(40.0 + 10.0 / 50.0, 40.0, 50.0) - 1.0).abs() < 1e-4);
        assert!((gate_factor(39.9, 40.0, 50.0) - 0.006_692_850_924_284_856).abs() < 1e-12);
        let v = velocity_gate([0.0, 1.0], [3.0, 40.0], 40.0, 50.0);
        assert_eq!(v, [0.0, 0.5]);
    }

    #[test]
    fn spacing_boundary() {
        let rules = MrcRuleSet::default();
        let v = check_violations(&two_lines(39.0), &rules);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].kind, RuleClass::MinSpacing);
        assert_eq!(v[0].measured, 39.0);
        assert!(check_violations(&two_lines(40.0), &rules).is_empty());
    }

    #[test]
    fn narrow_line_is_a_width_violation() {
        let s = segment_edges(&[Polygon::rect(0.0, 0.0, 30.0, 300.0).unwrap()], 80.0).unwrap();
        let v = check_violations(&s, &MrcRuleSet::default());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, RuleClass::MinWidth);
    }

    #[test]
    fn isolated_square_has_only_width_pairs() {
        let s = segment_edges(&[Polygon::rect(0.0, 0.0, 60.0, 60.0).unwrap()], 80.0).unwrap();
        let rules = MrcRuleSet::default();
        let pairs = extract_check_pairs(&s, &rules, rules.search_radius());
        assert!(!pairs.is_empty());
        assert!(pairs.iter().all(|p| p.kind == CheckKind::Width));
    }

    #[test]
    fn parallel_lines_spacing_pairs() {
        let s = two_lines(100.0);
        let rules = MrcRuleSet::default();
        let pairs = extract_check_pairs(&s, &rules, 200.0);
        let spacing: Vec<_> = pairs.iter().filter(|p| p.kind == CheckKind::Spacing).collect();
        // Facing 400 nm edges are cut 40/80/80/80/80/40; aligned cuts give
        // one overlapping partner per segment.
        assert_eq!(spacing.len(), 6);
        assert!(spacing.iter().all(|p| p.gap == 100.0));
        assert!(extract_check_pairs(&SegmentSet::default(), &rules, 200.0).is_empty());
    }

    #[test]
    fn gates_compose_by_minimum() {
        let s = two_lines(42.0);
        let rules = MrcRuleSet::default();
        let pairs = extract_check_pairs(&s, &rules, rules.search_radius());
        let gates = compute_gates(s.len(), &pairs, &rules, 0.0);
        let mut g = vec![-1.0; s.len()];
        let active = apply_gates(&mut g, &gates);
        assert!(active > 0);
        // Segments with no spacing pair move freely.
        for i in 0..s.len() {
            if !pairs.iter().any(|p| p.kind == CheckKind::Spacing && (p.seg_a == i || p.seg_b == Some(i))) {
                assert_eq!(g[i], -1.0);
            }
        }
    }
}

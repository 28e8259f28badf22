//! Named test layouts, a seeded random Manhattan layout generator, and
//! slow reference implementations used as test oracles.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Point, Polygon, SegmentSet};
use crate::grid::{AerialImage, Grid, Mask};
use crate::io::Layout;
use crate::litho::KernelSet;

pub const FIXTURE_NAMES: &[&str] = &[
    "square",
    "lines",
    "contact",
    "comb",
    "staircase",
    "donut",
    "square_and_lines",
    "tight_lines",
];

/// Base clip size of the named fixtures at `scale = 1`.
pub const FIXTURE_CLIP: usize = 512;

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
    Polygon::rect(x0, y0, x1, y1).expect("fixture rectangle")
}

fn poly(pts: &[(f64, f64)]) -> Polygon {
    Polygon::new(pts.iter().map(|&(x, y)| Point::new(x, y)).collect()).expect("fixture polygon")
}

/// Builds a named fixture on a `512·scale` clip, coordinates scaled alike.
pub fn make_fixture(name: &str, scale: usize) -> Result<Layout> {
    if scale == 0 {
        return Err(Error::config("fixture scale must be positive"));
    }
    let polys = match name {
        "square" => vec![rect(181.0, 181.0, 331.0, 331.0)],
        // Three vertical lines, 60 wide on a 120 pitch.
        "lines" => (0..3)
            .map(|i| {
                let x = 136.0 + 120.0 * i as f64;
                rect(x, 96.0, x + 60.0, 416.0)
            })
            .collect(),
        // 70 nm contact, centred on pixel (255.5, 255.5): columns and rows 221..=290.
        "contact" => vec![rect(221.0, 220.0, 291.0, 290.0)],
        "comb" => vec![poly(&[
            (96.0, 96.0),
            (416.0, 96.0),
            (416.0, 176.0),
            (376.0, 176.0),
            (376.0, 376.0),
            (316.0, 376.0),
            (316.0, 176.0),
            (286.0, 176.0),
            (286.0, 376.0),
            (226.0, 376.0),
            (226.0, 176.0),
            (196.0, 176.0),
            (196.0, 376.0),
            (136.0, 376.0),
            (136.0, 176.0),
            (96.0, 176.0),
        ])],
        "staircase" => vec![poly(&[
            (136.0, 136.0),
            (376.0, 136.0),
            (376.0, 216.0),
            (296.0, 216.0),
            (296.0, 296.0),
            (216.0, 296.0),
            (216.0, 376.0),
            (136.0, 376.0),
        ])],
        "donut" => vec![rect(146.0, 146.0, 366.0, 366.0), rect(216.0, 216.0, 296.0, 296.0).reversed()],
        "square_and_lines" => vec![
            rect(96.0, 176.0, 256.0, 336.0),
            rect(316.0, 96.0, 376.0, 416.0),
            rect(436.0, 96.0, 496.0, 416.0),
        ],
        // Two short lines 44 nm apart (minimum spacing + 4). Legal as drawn,
        // but their corner pieces are only 40 nm long: without rule gating
        // the optimizer grows sub-rule nubs there.
        "tight_lines" => vec![rect(154.0, 196.0, 234.0, 316.0), rect(278.0, 196.0, 358.0, 316.0)],
        other => return Err(Error::UnknownFixture(other.to_string())),
    };
    let s = scale as f64;
    let polygons = polys
        .into_iter()
        .map(|p| Polygon::new(p.vertices().iter().map(|v| Point::new(v.x * s, v.y * s)).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Layout::new(FIXTURE_CLIP * scale, FIXTURE_CLIP * scale, polygons))
}

/// Shape and spacing ranges for [`random_layout_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomLayoutParams {
    pub min_size: i64,
    pub max_size: i64,
    /// Clearance between bounding boxes.
    pub spacing: f64,
    /// Clearance from the clip border.
    pub margin: f64,
    /// Allow boxes with a rectangular hole.
    pub donuts: bool,
}

impl Default for RandomLayoutParams {
    fn default() -> Self {
        Self {
            min_size: 40,
            max_size: 160,
            spacing: 60.0,
            margin: 40.0,
            donuts: false,
        }
    }
}

/// Random non-overlapping rectangles and L-shapes on a `width × height`
/// clip, all at least 60 apart and 40 from the border.
pub fn random_layout(seed: u64, width: usize, height: usize, count: usize) -> Layout {
    random_layout_with(seed, width, height, count, &RandomLayoutParams::default())
}

/// Random rectangles, L-shapes and (optionally) donuts on integer
/// coordinates. Fewer than `count` shapes are placed when the clip fills up.
pub fn random_layout_with(seed: u64, width: usize, height: usize, count: usize, p: &RandomLayoutParams) -> Layout {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut boxes: Vec<(f64, f64, f64, f64)> = Vec::new();
    let mut polygons = Vec::new();
    let (w, h) = (width as f64, height as f64);
    for _ in 0..count * 20 {
        if boxes.len() >= count {
            break;
        }
        let bw = rng.gen_range(p.min_size..=p.max_size) as f64;
        let bh = rng.gen_range(p.min_size..=p.max_size) as f64;
        if w - 2.0 * p.margin <= bw || h - 2.0 * p.margin <= bh {
            continue;
        }
        let x0 = rng.gen_range(p.margin as i64..=(w - p.margin - bw) as i64) as f64;
        let y0 = rng.gen_range(p.margin as i64..=(h - p.margin - bh) as i64) as f64;
        let b = (x0, y0, x0 + bw, y0 + bh);
        let clear = boxes.iter().all(|o| {
            b.0 >= o.2 + p.spacing || o.0 >= b.2 + p.spacing || b.1 >= o.3 + p.spacing || o.1 >= b.3 + p.spacing
        });
        if !clear {
            continue;
        }
        boxes.push(b);
        let big = bw >= 2.5 * p.min_size as f64 && bh >= 2.5 * p.min_size as f64;
        match if big { rng.gen_range(0..3) } else { 0 } {
            1 => {
                // L-shape: remove the top-right quadrant.
                let (mx, my) = ((x0 + bw * 0.5).round(), (y0 + bh * 0.5).round());
                polygons.push(poly(&[(b.0, b.1), (b.2, b.1), (b.2, my), (mx, my), (mx, b.3), (b.0, b.3)]));
            }
            2 if p.donuts => {
                let t = (bw.min(bh) * 0.3).round();
                polygons.push(rect(b.0, b.1, b.2, b.3));
                polygons.push(rect(b.0 + t, b.1 + t, b.2 - t, b.3 - t).reversed());
            }
            _ => polygons.push(rect(b.0, b.1, b.2, b.3)),
        }
    }
    Layout::new(width, height, polygons)
}

/// Classic even-odd point-in-polygon test.
pub fn point_in_polygons(polygons: &[Polygon], p: Point) -> bool {
    let mut inside = false;
    for poly in polygons {
        let v = poly.vertices();
        let mut j = v.len() - 1;
        for i in 0..v.len() {
            if (v[i].y > p.y) != (v[j].y > p.y)
                && p.x < (v[j].x - v[i].x) * (p.y - v[i].y) / (v[j].y - v[i].y) + v[i].x
            {
                inside = !inside;
            }
            j = i;
        }
    }
    inside
}

/// Pixel `(x, y)` is on when the point `(x + ½, y − ½)` is inside.
pub fn oracle_rasterize(polygons: &[Polygon], width: usize, height: usize) -> Mask {
    Grid::from_fn(width, height, |x, y| {
        point_in_polygons(polygons, Point::new(x as f64 + 0.5, y as f64 - 0.5)) as u8 as f64
    })
}

/// Same sampling rule applied to the rings of a segment set (connectors
/// included), for checking rasterization of moved geometry.
pub fn oracle_rasterize_segments(s: &SegmentSet, width: usize, height: usize) -> Mask {
    let chains: Vec<Vec<Point>> = (0..s.rings.len()).map(|r| s.ring_chain(r)).collect();
    Grid::from_fn(width, height, |x, y| {
        let p = Point::new(x as f64 + 0.5, y as f64 - 0.5);
        let mut inside = false;
        for v in &chains {
            let mut j = v.len() - 1;
            for i in 0..v.len() {
                if (v[i].y > p.y) != (v[j].y > p.y)
                    && p.x < (v[j].x - v[i].x) * (p.y - v[i].y) / (v[j].y - v[i].y) + v[i].x
                {
                    inside = !inside;
                }
                j = i;
            }
        }
        inside as u8 as f64
    })
}

/// Direct periodic convolution `I = Σ σ_k |Σ_d h_k(d) M(x − d)|²`.
pub fn oracle_intensity(mask: &Mask, ks: &KernelSet) -> AerialImage {
    let (w, h) = mask.shape();
    let c = (ks.size() / 2) as i64;
    let on: Vec<(i64, i64)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| mask.get(x, y) != 0.0)
        .map(|(x, y)| (x as i64, y as i64))
        .collect();
    Grid::from_fn(w, h, |x, y| {
        let mut total = 0.0;
        for k in 0..ks.count() {
            let mut e = Complex64::default();
            for &(mx, my) in &on {
                // d = x − m, wrapped into the kernel support.
                let wrap = |d: i64, n: usize| {
                    let n = n as i64;
                    let d = d.rem_euclid(n);
                    if d > n / 2 {
                        d - n
                    } else {
                        d
                    }
                };
                let (dx, dy) = (wrap(x as i64 - mx, w), wrap(y as i64 - my, h));
                if dx.abs() <= c && dy.abs() <= c {
                    e += ks.tap(k, dx, dy) * mask.get(mx as usize, my as usize);
                }
            }
            total += ks.weights()[k] * e.norm_sqr();
        }
        total
    })
}

/// Central finite differences of `f` with respect to the listed pixels.
pub fn oracle_fd_gradient(
    f: impl Fn(&Mask) -> f64,
    mask: &Mask,
    pixels: &[(usize, usize)],
    eps: f64,
) -> Vec<f64> {
    pixels
        .iter()
        .map(|&(x, y)| {
            let mut p = mask.clone();
            p.set(x, y, mask.get(x, y) + eps);
            let fp = f(&p);
            p.set(x, y, mask.get(x, y) - eps);
            let fm = f(&p);
            (fp - fm) / (2.0 * eps)
        })
        .collect()
}

/// Every vertex of the ring chains (segment endpoints plus connector
/// endpoints) has exactly two incident boundary pieces, counting
/// zero-length connectors as absent.
pub fn oracle_rings_closed(s: &SegmentSet) -> bool {
    for r in 0..s.rings.len() {
        let chain = s.ring_chain(r);
        let n = chain.len();
        // Consecutive chain points alternate segment / connector; a closed
        // ring needs every connector to be axis-aligned or empty.
        for i in 0..n {
            let (a, b) = (chain[i], chain[(i + 1) % n]);
            if a.x != b.x && a.y != b.y {
                return false;
            }
        }
        if n < 4 {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_named_fixture_builds() {
        for name in FIXTURE_NAMES {
            let l = make_fixture(name, 1).unwrap();
            assert!(l.validate().is_ok(), "{name}");
            crate::geometry::segment_edges(&l.polygons, 80.0).unwrap();
        }
        assert!(matches!(make_fixture("nope", 1), Err(Error::UnknownFixture(_))));
        let big = make_fixture("square", 2).unwrap();
        assert_eq!(big.width, 1024);
        assert_eq!(big.polygons[0].bbox(), (362.0, 362.0, 662.0, 662.0));
    }

    #[test]
    fn random_layouts_are_valid_and_seeded() {
        let a = random_layout(7, 512, 512, 6);
        let b = random_layout(7, 512, 512, 6);
        assert_eq!(a, b);
        assert!(!a.polygons.is_empty());
        crate::geometry::segment_edges(&a.polygons, 80.0).unwrap();
    }

    #[test]
    fn small_random_layouts_include_donuts() {
        let p = RandomLayoutParams {
            min_size: 8,
            max_size: 48,
            spacing: 4.0,
            margin: 2.0,
            donuts: true,
        };
        let holes = (0..20)
            .map(|s| random_layout_with(s, 128, 128, 6, &p))
            .flat_map(|l| l.polygons)
            .filter(|q| q.signed_area() < 0.0)
            .count();
        assert!(holes > 0);
    }

    #[test]
    fn contact_is_centred() {
        let l = make_fixture("contact", 1).unwrap();
        let m = oracle_rasterize(&l.polygons, 512, 512);
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
        for y in 0..512 {
            for x in 0..512 {
                if m.get(x, y) > 0.0 {
                    sx += x as f64;
                    sy += y as f64;
                    n += 1.0;
                }
            }
        }
        assert_eq!(n, 4900.0);
        assert_eq!((sx / n, sy / n), (255.5, 255.5));
    }
}

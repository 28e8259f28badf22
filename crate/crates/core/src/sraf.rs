//! Assist-feature seeding from low-resolution gradient maps, and
//! co-optimization of the resulting rectangles with the main pattern.
//!
//! Seeding: downsample the target by area averaging, image it with
//! downsampled kernels, and take `∂L2/∂M` with the target itself as the
//! mask. Negative values mark places where adding chrome would pull the
//! print towards the target. Strict local minima outside a clearance zone
//! become seeds; ties are clustered so symmetric targets give symmetric
//! seed sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Polygon};
use crate::grid::{Grid, Mask};
use crate::litho::{KernelSet, ProcessCorner, Simulator};
use crate::loss::{grad_l2, ForwardPass};
use crate::mrc::MrcRuleSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SrafConfig {
    /// Full-resolution pixels per low-resolution pixel.
    pub factor: usize,
    /// Initial side length of an assist rectangle (nm).
    pub size: f64,
    pub max_srafs: usize,
    /// Extra distance kept beyond the strictest spacing rule when placing seeds.
    pub clearance: f64,
    /// Assist features narrower than this are removed.
    pub min_width: f64,
    /// Printing/width pruning cadence in iterations (0 = only at the end).
    pub prune_every: usize,
}

impl Default for SrafConfig {
    fn default() -> Self {
        Self {
            factor: 4,
            size: 20.0,
            max_srafs: 16,
            clearance: 10.0,
            min_width: 10.0,
            prune_every: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SrafSeed {
    /// Centre in full-resolution pixel coordinates.
    pub center: Point,
    pub size: [f64; 2],
    /// Gradient value at the seed (more negative = stronger).
    pub score: f64,
}

impl SrafSeed {
    /// Pixel columns and rows `(x_lo, x_hi, y_lo, y_hi)` covered, inclusive.
    pub fn pixel_span(&self) -> (i64, i64, i64, i64) {
        let hx = (self.size[0] - 1.0) * 0.5;
        let hy = (self.size[1] - 1.0) * 0.5;
        let x_lo = (self.center.x - hx).round() as i64;
        let y_lo = (self.center.y - hy).round() as i64;
        (
            x_lo,
            x_lo + self.size[0] as i64 - 1,
            y_lo,
            y_lo + self.size[1] as i64 - 1,
        )
    }

    /// Polygon whose rasterization is exactly [`Self::pixel_span`]: pixel
    /// row `y` covers `[y − 1, y)`.
    pub fn polygon(&self) -> Result<Polygon> {
        let (x0, x1, y0, y1) = self.pixel_span();
        Polygon::rect(x0 as f64, (y0 - 1) as f64, (x1 + 1) as f64, y1 as f64)
    }
}

/// Summed-area table for O(1) box counts.
struct Sat {
    w: usize,
    h: usize,
    s: Vec<f64>,
}

impl Sat {
    fn new(g: &Grid) -> Self {
        let (w, h) = g.shape();
        let mut s = vec![0.0; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += if g.get(x, y) > 0.0 { 1.0 } else { 0.0 };
                s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
            }
        }
        Self { w, h, s }
    }

    /// Count in the inclusive box, clipped to the grid.
    fn count(&self, x0: i64, x1: i64, y0: i64, y1: i64) -> f64 {
        let cx = |v: i64| v.clamp(0, self.w as i64) as usize;
        let cy = |v: i64| v.clamp(0, self.h as i64) as usize;
        let (a, b, c, d) = (cx(x0), cx(x1 + 1), cy(y0), cy(y1 + 1));
        if a >= b || c >= d {
            return 0.0;
        }
        let at = |x: usize, y: usize| self.s[y * (self.w + 1) + x];
        at(b, d) - at(a, d) - at(b, c) + at(a, c)
    }
}

/// Seeds at negative local minima of the low-resolution L2 gradient.
pub fn generate_sraf_seeds(
    target: &Mask,
    kernels: &KernelSet,
    rules: &MrcRuleSet,
    cfg: &SrafConfig,
    alpha: f64,
    threshold: f64,
) -> Result<Vec<SrafSeed>> {
    let f = cfg.factor;
    let (w, h) = target.shape();
    if f == 0 || w % f != 0 || h % f != 0 {
        return Err(Error::config(format!(
            "clip {w}x{h} is not divisible by the SRAF factor {f}"
        )));
    }
    if !(cfg.size >= 1.0) {
        return Err(Error::config("SRAF size must be at least 1 nm"));
    }
    let t_low = target.downsample(f);
    let (lw, lh) = t_low.shape();
    let mut k_low = kernels.downsampled(f)?;
    let fit = lw.min(lh);
    if k_low.size() > fit {
        // Outermost taps wrap around the periodic grid anyway; drop them.
        let odd = if fit % 2 == 1 { fit } else { fit - 1 };
        k_low = k_low.cropped(odd)?;
    }
    let sim = Simulator::new(&[k_low], lw, lh)?;
    let fwd = ForwardPass::run(&sim, &t_low, &[ProcessCorner::dose(1.0)], alpha, threshold)?;
    let g = grad_l2(&sim, &fwd, &t_low)?;
    let scale = g.max_abs();
    if scale == 0.0 {
        return Ok(Vec::new());
    }
    let tol = 1e-6 * scale;

    let sat = Sat::new(target);
    let keep_out = rules.gate_spacing() + cfg.clearance;
    let to_full = |c: f64| f as f64 * c + (f as f64 - 1.0) * 0.5;
    let seed_at = |cx: f64, cy: f64, score: f64| SrafSeed {
        center: Point::new(to_full(cx), to_full(cy)),
        size: [cfg.size, cfg.size],
        score,
    };
    let eligible = |s: &SrafSeed| {
        let (x0, x1, y0, y1) = s.pixel_span();
        let k = keep_out.ceil() as i64;
        let inside = x0 - k >= 0 && y0 - k >= 0 && x1 + k < w as i64 && y1 + k < h as i64;
        inside && sat.count(x0 - k, x1 + k, y0 - k, y1 + k) == 0.0
    };

    // Negative local minima (within tolerance) among eligible pixels.
    let mut cand = vec![false; lw * lh];
    for y in 1..lh.saturating_sub(1) {
        for x in 1..lw.saturating_sub(1) {
            let v = g.get(x, y);
            if v >= -tol || !eligible(&seed_at(x as f64, y as f64, v)) {
                continue;
            }
            let mut is_min = true;
            'nb: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if (dx, dy) != (0, 0) && v > g.get((x as i64 + dx) as usize, (y as i64 + dy) as usize) + tol {
                        is_min = false;
                        break 'nb;
                    }
                }
            }
            cand[y * lw + x] = is_min;
        }
    }

    // Cluster 8-connected candidates (plateaus straddling a symmetry axis).
    let mut label = vec![usize::MAX; lw * lh];
    let mut clusters: Vec<Vec<(usize, usize)>> = Vec::new();
    for start in 0..lw * lh {
        if !cand[start] || label[start] != usize::MAX {
            continue;
        }
        let id = clusters.len();
        let mut stack = vec![start];
        label[start] = id;
        let mut members = Vec::new();
        while let Some(p) = stack.pop() {
            let (x, y) = (p % lw, p / lw);
            members.push((x, y));
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= lw as i64 || ny >= lh as i64 {
                        continue;
                    }
                    let q = ny as usize * lw + nx as usize;
                    if cand[q] && label[q] == usize::MAX {
                        label[q] = id;
                        stack.push(q);
                    }
                }
            }
        }
        clusters.push(members);
    }

    let mut seeds: Vec<SrafSeed> = clusters
        .iter()
        .filter_map(|m| {
            let n = m.len() as f64;
            let cx = m.iter().map(|p| p.0 as f64).sum::<f64>() / n;
            let cy = m.iter().map(|p| p.1 as f64).sum::<f64>() / n;
            // Snap to half pixels so even-sized rectangles stay grid aligned.
            let (cx, cy) = ((cx * 2.0).round() * 0.5, (cy * 2.0).round() * 0.5);
            let score = m.iter().map(|&(x, y)| g.get(x, y)).fold(f64::INFINITY, f64::min);
            let s = seed_at(cx, cy, score);
            eligible(&s).then_some(s)
        })
        .collect();
    seeds.sort_by(|a, b| {
        a.score
            .total_cmp(&b.score)
            .then(a.center.y.total_cmp(&b.center.y))
            .then(a.center.x.total_cmp(&b.center.x))
    });

    // Greedy selection in groups of near-equal score. A seed conflicting
    // with an earlier group is dropped; seeds conflicting within their own
    // group are all dropped, which keeps symmetric partners together.
    let min_gap = rules.gate_spacing() + cfg.clearance;
    let conflict = |a: &SrafSeed, b: &SrafSeed| {
        let dx = (a.center.x - b.center.x).abs() - (a.size[0] + b.size[0]) * 0.5;
        let dy = (a.center.y - b.center.y).abs() - (a.size[1] + b.size[1]) * 0.5;
        dx.max(dy) < min_gap
    };
    let mut chosen: Vec<SrafSeed> = Vec::new();
    let mut i = 0;
    while i < seeds.len() && chosen.len() < cfg.max_srafs {
        let mut j = i + 1;
        while j < seeds.len() && seeds[j].score - seeds[i].score <= tol {
            j += 1;
        }
        let group: Vec<SrafSeed> = seeds[i..j]
            .iter()
            .filter(|s| !chosen.iter().any(|c| conflict(c, s)))
            .copied()
            .collect();
        for (k, s) in group.iter().enumerate() {
            if !group.iter().enumerate().any(|(l, o)| l != k && conflict(o, s)) {
                chosen.push(*s);
            }
        }
        i = j;
    }
    Ok(chosen)
}

/// Runs the optimizer with the seeds as additional assist rectangles.
pub fn optimize_with_srafs(
    layout: &crate::io::Layout,
    seeds: &[SrafSeed],
    config: &crate::optimizer::OptimizerConfig,
    kernels: &[KernelSet],
) -> Result<crate::optimizer::OptimizeResult> {
    let mut with = layout.clone();
    with.srafs = seeds.iter().map(|s| s.polygon()).collect::<Result<_>>()?;
    let mut cfg = config.clone();
    cfg.sraf_enabled = false;
    crate::optimizer::optimize_with_kernel_sets(&with, &cfg, kernels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::litho::make_synthetic_kernels;

    #[test]
    fn seed_polygon_matches_pixel_span() {
        let s = SrafSeed {
            center: Point::new(255.5, 101.5),
            size: [20.0, 20.0],
            score: -1.0,
        };
        assert_eq!(s.pixel_span(), (246, 265, 92, 111));
        let p = s.polygon().unwrap();
        assert_eq!(p.bbox(), (246.0, 91.0, 266.0, 111.0));
    }

    #[test]
    fn full_clear_target_has_no_seeds() {
        let t = Grid::filled(64, 64, 1.0);
        let ks = make_synthetic_kernels(15, 1, 1.35).unwrap();
        let s = generate_sraf_seeds(&t, &ks, &MrcRuleSet::default(), &SrafConfig::default(), 50.0, 0.225).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn rejects_indivisible_clip() {
        let t = Grid::zeros(62, 64);
        let ks = make_synthetic_kernels(15, 1, 1.35).unwrap();
        assert!(generate_sraf_seeds(&t, &ks, &MrcRuleSet::default(), &SrafConfig::default(), 50.0, 0.225).is_err());
    }
}

//! Evaluation metrics on hard-threshold images and mask fracturing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Axis;
use crate::grid::{Grid, Mask, ResistImage};
use crate::litho::{corner_roles, ProcessCorner, Simulator};
use crate::loss::EpeSamplePlan;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Squared L2 error in nm² (differing pixels at 1 nm/px).
    pub l2: f64,
    /// Process-variation band area in nm².
    pub pvb: f64,
    pub epe_count: usize,
    pub shots: usize,
    /// Wall-clock runtime. Kept out of serialized reports so that repeated
    /// runs produce byte-identical files.
    #[serde(skip)]
    pub tat_seconds: f64,
}

impl MetricsReport {
    /// Fixed-width table row: L2, PVB, EPE, shots, TAT.
    pub fn table(&self) -> String {
        format!(
            "{:>12} {:>12} {:>6} {:>8} {:>10}\n{:>12.0} {:>12.0} {:>6} {:>8} {:>10.2}",
            "L2(nm^2)", "PVB(nm^2)", "EPE", "#shots", "TAT(s)", self.l2, self.pvb, self.epe_count, self.shots, self.tat_seconds
        )
    }
}

fn ensure_binary(g: &Grid, what: &str) -> Result<()> {
    if g.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Contract(format!("{what} must be binary")));
    }
    Ok(())
}

/// Number of differing pixels between two binary images.
pub fn metric_l2(z_nom: &ResistImage, target: &Mask) -> Result<f64> {
    ensure_binary(z_nom, "printed image")?;
    ensure_binary(target, "target")?;
    Ok(z_nom.zip_map(target, |a, b| (a != b) as u8 as f64)?.sum())
}

/// Band area between the max- and min-corner prints.
pub fn metric_pvb(z_max: &ResistImage, z_min: &ResistImage) -> Result<f64> {
    metric_l2(z_max, z_min)
}

/// Signed displacement of the printed contour at one sample, scanning at
/// most `2 · th_epe` pixels along the edge normal. Positive means the print
/// extends beyond the target edge.
pub fn contour_displacement(z_nom: &ResistImage, s: &crate::loss::EpeSample, th_epe: usize) -> i64 {
    let (nx, ny) = match s.axis {
        Axis::Horizontal => (0, s.outward as i64),
        Axis::Vertical => (s.outward as i64, 0),
    };
    let cap = 2 * th_epe as i64;
    let printed = |k: i64| {
        z_nom
            .get_checked(s.x as i64 + k * nx, s.y as i64 + k * ny)
            .map(|v| v >= 0.5)
            .unwrap_or(false)
    };
    if printed(0) {
        for k in 1..=cap {
            if !printed(k) {
                return k - 1;
            }
        }
        cap
    } else {
        for k in 1..=cap {
            if printed(-k) {
                return -k;
            }
        }
        -cap
    }
}

/// Samples whose contour displacement exceeds `th_epe` (strictly).
pub fn metric_epe(z_nom: &ResistImage, target: &Mask, plan: &EpeSamplePlan) -> Result<usize> {
    z_nom.ensure_shape(target)?;
    ensure_binary(z_nom, "printed image")?;
    Ok(plan
        .samples
        .iter()
        .filter(|s| contour_displacement(z_nom, s, plan.th_epe).unsigned_abs() as usize > plan.th_epe)
        .count())
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

/// Horizontal-slab decomposition: maximal runs in each row, stacked
/// vertically while their x-extent stays the same.
pub fn decompose_rects(mask: &Mask) -> Vec<Rect> {
    let (w, h) = mask.shape();
    let mut done = Vec::new();
    let mut open: Vec<Rect> = Vec::new();
    for y in 0..h {
        let row = mask.row(y);
        let mut runs = Vec::new();
        let mut x = 0;
        while x < w {
            if row[x] >= 0.5 {
                let s = x;
                while x < w && row[x] >= 0.5 {
                    x += 1;
                }
                runs.push((s, x));
            } else {
                x += 1;
            }
        }
        let mut next_open = Vec::with_capacity(runs.len());
        let mut prev = open.into_iter().peekable();
        for (s, e) in runs {
            // Runs are sorted and disjoint in both rows, so a merge walk works.
            while let Some(r) = prev.peek() {
                if r.x0 < s || (r.x0 == s && r.x1 != e) {
                    done.push(prev.next().expect("peeked"));
                } else {
                    break;
                }
            }
            match prev.peek() {
                Some(r) if r.x0 == s && r.x1 == e => {
                    let mut r = prev.next().expect("peeked");
                    r.y1 = y + 1;
                    next_open.push(r);
                }
                _ => next_open.push(Rect {
                    x0: s,
                    y0: y,
                    x1: e,
                    y1: y + 1,
                }),
            }
        }
        done.extend(prev);
        open = next_open;
    }
    done.extend(open);
    done.sort_by_key(|r| (r.y0, r.x0));
    done
}

pub fn shot_count(mask: &Mask) -> usize {
    decompose_rects(mask).len()
}

/// Paints rectangles onto an empty grid (for the reconstruction check).
pub fn paint_rects(rects: &[Rect], width: usize, height: usize) -> Grid {
    let mut g = Grid::zeros(width, height);
    for r in rects {
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                g.set(x, y, 1.0);
            }
        }
    }
    g
}

/// Hard-threshold prints at the nominal, max and min corners.
pub fn hard_corner_prints(
    mask: &Mask,
    sim: &Simulator,
    corners: &[ProcessCorner],
    threshold: f64,
) -> Result<(ResistImage, ResistImage, ResistImage)> {
    let roles = corner_roles(corners)?;
    let mut cache: Vec<Option<Grid>> = vec![None; sim.num_sets()];
    let mut print = |c: ProcessCorner| -> Result<ResistImage> {
        if cache.get(c.kernel_set).is_none() {
            return Err(Error::config(format!("corner refers to missing kernel set {}", c.kernel_set)));
        }
        if cache[c.kernel_set].is_none() {
            cache[c.kernel_set] = Some(sim.intensity(mask, c.kernel_set)?);
        }
        let i = cache[c.kernel_set].as_ref().expect("filled");
        Ok(i.map(|v| if c.dose_scale * v > threshold { 1.0 } else { 0.0 }))
    };
    Ok((
        print(corners[roles.nominal])?,
        print(corners[roles.max])?,
        print(corners[roles.min])?,
    ))
}

/// Full metric report for a binary mask.
pub fn evaluate(
    mask: &Mask,
    target: &Mask,
    sim: &Simulator,
    corners: &[ProcessCorner],
    threshold: f64,
    plan: &EpeSamplePlan,
) -> Result<MetricsReport> {
    let (nom, max, min) = hard_corner_prints(mask, sim, corners, threshold)?;
    Ok(MetricsReport {
        l2: metric_l2(&nom, target)?,
        pvb: metric_pvb(&max, &min)?,
        epe_count: metric_epe(&nom, target, plan)?,
        shots: shot_count(mask),
        tat_seconds: 0.0,
    })
}

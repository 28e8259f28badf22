//! Composite objective (L2, process-variation band, EPE) and its analytic
//! gradient with respect to the mask.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Axis, SegmentSet};
use crate::grid::{Grid, Mask, ResistImage};
use crate::litho::{corner_roles, sigmoid, CornerRoles, Fields, ProcessCorner, Simulator};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w1: 1.0,
            w2: 0.9,
            w3: 100.0,
        }
    }
}

impl LossWeights {
    pub fn new(w1: f64, w2: f64, w3: f64) -> Result<Self> {
        let w = Self { w1, w2, w3 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.w1, self.w2, self.w3];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::config("loss weights must be finite and non-negative"));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(Error::config("at least one loss weight must be positive"));
        }
        Ok(())
    }
}

/// One EPE measurement site: the pixel just inside a target edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpeSample {
    pub x: usize,
    pub y: usize,
    /// Orientation of the target edge. Horizontal-edge samples sum their
    /// window along y, vertical-edge samples along x.
    pub axis: Axis,
    /// Sign of the outward normal along the measurement axis.
    pub outward: i8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpeSamplePlan {
    pub samples: Vec<EpeSample>,
    pub th_epe: usize,
    pub gamma: f64,
}

impl EpeSamplePlan {
    /// One sample per target segment midpoint, skipping segments whose
    /// midpoint lies within `th_epe` of either end of its original edge.
    pub fn from_target(target: &SegmentSet, th_epe: usize, gamma: f64, width: usize, height: usize) -> Result<Self> {
        if th_epe < 1 {
            return Err(Error::config("th_epe must be at least 1"));
        }
        if !(gamma > 0.0) {
            return Err(Error::config("gamma must be positive"));
        }
        let mut samples = Vec::new();
        for (r, ring) in target.rings.iter().enumerate() {
            if ring.sraf {
                continue;
            }
            let segs = &ring.segments;
            for (k, &i) in segs.iter().enumerate() {
                // Original edge extent: walk back/forward to its first/last segment.
                let mut first = k;
                while !target.info[segs[first]].first_in_edge {
                    first = (first + segs.len() - 1) % segs.len();
                }
                let mut last = k;
                while !target.info[segs[last]].last_in_edge {
                    last = (last + 1) % segs.len();
                }
                let axis = target.axis(i);
                let m = target.midpoint(i);
                let e0 = axis.along(target.start(segs[first]));
                let e1 = axis.along(target.end(segs[last]));
                let along = axis.along(m);
                if (along - e0).abs() <= th_epe as f64 || (along - e1).abs() <= th_epe as f64 {
                    continue;
                }
                let v = target.velocities[i];
                let e = axis.across(m);
                let s = match axis {
                    Axis::Horizontal => {
                        let outward = if v[1] > 0.0 { 1 } else { -1 };
                        // Row y holds the cell [y-1, y): the inside row of an
                        // edge at y = e is e when material lies below, e+1 above.
                        let y = if outward > 0 { e } else { e + 1.0 };
                        (m.x.floor(), y, outward)
                    }
                    Axis::Vertical => {
                        let outward = if v[0] > 0.0 { 1 } else { -1 };
                        let x = if outward > 0 { e - 1.0 } else { e };
                        (x, m.y.floor() + 1.0, outward)
                    }
                };
                let (x, y, outward) = s;
                if x < 0.0 || y < 0.0 || x >= width as f64 || y >= height as f64 {
                    log::warn!("EPE sample for ring {r} segment {i} lies outside the clip; skipped");
                    continue;
                }
                samples.push(EpeSample {
                    x: x as usize,
                    y: y as usize,
                    axis,
                    outward,
                });
            }
        }
        Ok(Self {
            samples,
            th_epe,
            gamma,
        })
    }

    /// Samples on horizontal target edges.
    pub fn hs(&self) -> impl Iterator<Item = &EpeSample> {
        self.samples.iter().filter(|s| s.axis == Axis::Horizontal)
    }

    /// Samples on vertical target edges.
    pub fn vs(&self) -> impl Iterator<Item = &EpeSample> {
        self.samples.iter().filter(|s| s.axis == Axis::Vertical)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Pixels in a sample's window, clamped to the image.
    pub fn window(&self, s: &EpeSample, width: usize, height: usize) -> Vec<(usize, usize)> {
        let th = self.th_epe as i64;
        let (cx, cy) = (s.x as i64, s.y as i64);
        (-th..=th)
            .filter_map(|d| {
                let (x, y) = match s.axis {
                    Axis::Horizontal => (cx, cy + d),
                    Axis::Vertical => (cx + d, cy),
                };
                (x >= 0 && y >= 0 && x < width as i64 && y < height as i64).then_some((x as usize, y as usize))
            })
            .collect()
    }

    fn check(&self, width: usize, height: usize) -> Result<()> {
        if self.samples.iter().any(|s| s.x >= width || s.y >= height) {
            return Err(Error::Contract("EPE sample outside the image".into()));
        }
        Ok(())
    }
}

/// `Σ (Z_nom − T)²`.
pub fn loss_l2(z_nom: &ResistImage, target: &Mask) -> Result<f64> {
    Ok(z_nom.zip_map(target, |z, t| (z - t) * (z - t))?.sum())
}

/// `Σ (Z_max − Z_min)²`.
pub fn loss_pvb(z_max: &ResistImage, z_min: &ResistImage) -> Result<f64> {
    loss_l2(z_max, z_min)
}

/// Window sums of `D = (Z_nom − T)²` at every sample.
pub fn epe_distance_sums(z_nom: &ResistImage, target: &Mask, plan: &EpeSamplePlan) -> Result<Vec<f64>> {
    z_nom.ensure_shape(target)?;
    plan.check(z_nom.width(), z_nom.height())?;
    let (w, h) = z_nom.shape();
    Ok(plan
        .samples
        .iter()
        .map(|s| {
            plan.window(s, w, h)
                .into_iter()
                .map(|(x, y)| {
                    let d = z_nom.get(x, y) - target.get(x, y);
                    d * d
                })
                .sum()
        })
        .collect())
}

/// `Σ σ(γ · D_sum)`.
pub fn loss_epe(d_sums: &[f64], gamma: f64) -> f64 {
    d_sums.iter().map(|&d| sigmoid(gamma * d)).sum()
}

/// Everything the gradients need from the forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub corners: Vec<ProcessCorner>,
    pub roles: CornerRoles,
    pub alpha: f64,
    pub threshold: f64,
    /// Coherent fields per kernel set (only sets used by some corner).
    pub fields: Vec<Option<Fields>>,
    /// Sigmoid resist image per corner.
    pub resist: Vec<ResistImage>,
}

impl ForwardPass {
    pub fn run(sim: &Simulator, mask: &Mask, corners: &[ProcessCorner], alpha: f64, threshold: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::config("alpha must be positive"));
        }
        let roles = corner_roles(corners)?;
        let mut fields: Vec<Option<Fields>> = (0..sim.num_sets()).map(|_| None).collect();
        for c in corners {
            if c.kernel_set >= sim.num_sets() {
                return Err(Error::config(format!("corner refers to missing kernel set {}", c.kernel_set)));
            }
            if fields[c.kernel_set].is_none() {
                fields[c.kernel_set] = Some(sim.fields(mask, c.kernel_set)?);
            }
        }
        let resist = corners
            .iter()
            .map(|c| {
                let i = &fields[c.kernel_set].as_ref().expect("computed above").intensity;
                i.map(|v| sigmoid(alpha * (c.dose_scale * v - threshold)))
            })
            .collect();
        Ok(Self {
            corners: corners.to_vec(),
            roles,
            alpha,
            threshold,
            fields,
            resist,
        })
    }

    pub fn z_nom(&self) -> &ResistImage {
        &self.resist[self.roles.nominal]
    }

    pub fn z_max(&self) -> &ResistImage {
        &self.resist[self.roles.max]
    }

    pub fn z_min(&self) -> &ResistImage {
        &self.resist[self.roles.min]
    }

    pub fn intensity(&self, corner: usize) -> &Grid {
        &self.fields[self.corners[corner].kernel_set]
            .as_ref()
            .expect("fields exist for every corner")
            .intensity
    }

    /// `∂L/∂I` at `corner` from `∂L/∂Z` there.
    fn dl_di(&self, corner: usize, dl_dz: &Grid) -> Result<Grid> {
        let s = self.corners[corner].dose_scale;
        let a = self.alpha;
        dl_dz.zip_map(&self.resist[corner], |g, z| g * a * s * z * (1.0 - z))
    }

    fn backprop(&self, sim: &Simulator, set: usize, dl_di: &Grid) -> Result<Grid> {
        let f = self.fields[set]
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("no forward fields for kernel set {set}")))?;
        sim.backprop(f, dl_di)
    }

    fn check(&self, sim: &Simulator, other: &Grid) -> Result<()> {
        if other.shape() != (sim.width(), sim.height()) || self.z_nom().shape() != other.shape() {
            return Err(Error::Shape {
                expected: self.z_nom().shape(),
                got: other.shape(),
            });
        }
        if self.fields.len() != sim.num_sets() {
            return Err(Error::Contract("forward pass was produced by a different simulator".into()));
        }
        Ok(())
    }
}

/// `∂L/∂Z` contributions, one per (corner, image) term.
type ZTerms = Vec<(usize, Grid)>;

fn l2_terms(fwd: &ForwardPass, target: &Mask) -> Result<ZTerms> {
    let dl_dz = fwd.z_nom().zip_map(target, |z, t| 2.0 * (z - t))?;
    Ok(vec![(fwd.roles.nominal, dl_dz)])
}

fn pvb_terms(fwd: &ForwardPass) -> Result<ZTerms> {
    let (hi, lo) = (fwd.roles.max, fwd.roles.min);
    if hi == lo {
        return Ok(Vec::new());
    }
    let diff = fwd.z_max().zip_map(fwd.z_min(), |a, b| 2.0 * (a - b))?;
    let neg = diff.map(|v| -v);
    Ok(vec![(hi, diff), (lo, neg)])
}

fn epe_terms(fwd: &ForwardPass, target: &Mask, plan: &EpeSamplePlan) -> Result<ZTerms> {
    let z = fwd.z_nom();
    let (w, h) = z.shape();
    let d_sums = epe_distance_sums(z, target, plan)?;
    // Per-pixel coefficient: Σ over samples whose window covers the pixel of
    // dL/dD_sum = γ σ (1 − σ). Samples are visited in order.
    let mut coef = Grid::zeros(w, h);
    for (s, &d) in plan.samples.iter().zip(&d_sums) {
        let sg = sigmoid(plan.gamma * d);
        let c = plan.gamma * sg * (1.0 - sg);
        for (x, y) in plan.window(s, w, h) {
            coef.set(x, y, coef.get(x, y) + c);
        }
    }
    let dz = z.zip_map(target, |z, t| 2.0 * (z - t))?;
    Ok(vec![(fwd.roles.nominal, coef.zip_map(&dz, |c, d| c * d)?)])
}

/// Chains weighted `∂L/∂Z` terms through the resist model, sums them per
/// kernel set, and backpropagates each set once.
fn backprop_terms(sim: &Simulator, fwd: &ForwardPass, terms: &[(f64, ZTerms)]) -> Result<Grid> {
    let mut per_set: Vec<Option<Grid>> = (0..sim.num_sets()).map(|_| None).collect();
    for (w, zt) in terms {
        if *w == 0.0 {
            continue;
        }
        for (corner, dl_dz) in zt {
            let g = fwd.dl_di(*corner, dl_dz)?;
            let slot = &mut per_set[fwd.corners[*corner].kernel_set];
            match slot {
                Some(acc) => accumulate_weighted(acc, *w, &g)?,
                None => *slot = Some(if *w == 1.0 { g } else { g.map(|v| w * v) }),
            }
        }
    }
    let mut out = Grid::zeros(sim.width(), sim.height());
    let mut first = true;
    for (set, g) in per_set.iter().enumerate() {
        if let Some(g) = g {
            let d = fwd.backprop(sim, set, g)?;
            if first {
                out = d;
                first = false;
            } else {
                accumulate_weighted(&mut out, 1.0, &d)?;
            }
        }
    }
    Ok(out)
}

/// `∂‖Z_nom − T‖² / ∂M`.
pub fn grad_l2(sim: &Simulator, fwd: &ForwardPass, target: &Mask) -> Result<Grid> {
    fwd.check(sim, target)?;
    backprop_terms(sim, fwd, &[(1.0, l2_terms(fwd, target)?)])
}

/// `∂‖Z_max − Z_min‖² / ∂M = 2 (Z_max − Z_min) ⊙ (∂Z_max/∂M − ∂Z_min/∂M)`.
pub fn grad_pvb(sim: &Simulator, fwd: &ForwardPass) -> Result<Grid> {
    fwd.check(sim, fwd.z_max())?;
    backprop_terms(sim, fwd, &[(1.0, pvb_terms(fwd)?)])
}

/// `∂ Σ σ(γ D_sum) / ∂M`, chaining through the window sums and `Z_nom`.
pub fn grad_epe(sim: &Simulator, fwd: &ForwardPass, target: &Mask, plan: &EpeSamplePlan) -> Result<Grid> {
    fwd.check(sim, target)?;
    backprop_terms(sim, fwd, &[(1.0, epe_terms(fwd, target, plan)?)])
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossScalars {
    pub l2: f64,
    pub pvb: f64,
    pub epe: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct LossBundle {
    pub l2: f64,
    pub pvb: f64,
    pub epe: f64,
    pub total: f64,
    pub dl_dm: Grid,
}

impl LossBundle {
    pub fn scalars(&self) -> LossScalars {
        LossScalars {
            l2: self.l2,
            pvb: self.pvb,
            epe: self.epe,
            total: self.total,
        }
    }
}

/// Weighted sum of `g` into `acc`, skipping zero weights.
pub fn accumulate_weighted(acc: &mut Grid, w: f64, g: &Grid) -> Result<()> {
    if w == 0.0 {
        return Ok(());
    }
    acc.ensure_shape(g)?;
    for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
        *a += w * b;
    }
    Ok(())
}

/// All three losses and `∂L/∂M = w1 ∂L2/∂M + w2 ∂Lpvb/∂M + w3 ∂Lepe/∂M`,
/// Weighted `∂L/∂Z` terms are summed in that order and backpropagated once
/// per kernel set, so the result equals the weighted sum of the component
/// gradients up to rounding (exactly, when only one weight is non-zero).
/// Components with zero weight are skipped.
pub fn total_loss_and_grad(
    sim: &Simulator,
    fwd: &ForwardPass,
    target: &Mask,
    plan: &EpeSamplePlan,
    weights: &LossWeights,
) -> Result<LossBundle> {
    weights.validate()?;
    fwd.check(sim, target)?;
    let l2 = loss_l2(fwd.z_nom(), target)?;
    let pvb = loss_pvb(fwd.z_max(), fwd.z_min())?;
    let epe = loss_epe(&epe_distance_sums(fwd.z_nom(), target, plan)?, plan.gamma);
    let total = weights.w1 * l2 + weights.w2 * pvb + weights.w3 * epe;

    let mut terms = Vec::with_capacity(3);
    if weights.w1 != 0.0 {
        terms.push((weights.w1, l2_terms(fwd, target)?));
    }
    if weights.w2 != 0.0 {
        terms.push((weights.w2, pvb_terms(fwd)?));
    }
    if weights.w3 != 0.0 {
        terms.push((weights.w3, epe_terms(fwd, target, plan)?));
    }
    let dl_dm = backprop_terms(sim, fwd, &terms)?;
    Ok(LossBundle {
        l2,
        pvb,
        epe,
        total,
        dl_dm,
    })
}

//! The edge-based optimization loop.
//!
//! Each iteration: round → merge corners → rasterize → image at every
//! corner → losses and `∂L/∂M` → project to segment motion → gate by
//! rule proximity → clip → step. Rounding uses a straight-through
//! estimator, so the unrounded coordinates carry the state.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{merge_corners, segment_edges_with_min, ste_round, SegmentSet};
use crate::grid::Mask;
use crate::io::{self, Layout};
use crate::litho::{corner_roles, default_corners, KernelSet, ProcessCorner, Simulator};
use crate::loss::{total_loss_and_grad, EpeSamplePlan, ForwardPass, LossWeights};
use crate::metrics::{evaluate, metric_epe, metric_l2, MetricsReport};
use crate::mrc::{apply_gates, compute_gates, extract_check_pairs_with_margin, MrcRuleSet};
use crate::raster::{apply_step, compute_edge_gradients_with, rasterize, EdgeGradient, GradientMode};
use crate::sraf::{generate_sraf_seeds, SrafConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    /// Per-iteration displacement clip (px).
    pub max_step: f64,
    pub seg_length: f64,
    /// Shortest segment produced by partitioning; `None` uses the rule
    /// set's minimum width.
    pub min_segment_length: Option<f64>,
    pub alpha: f64,
    /// Gate steepness; overrides `rules.beta`.
    pub beta: f64,
    pub gamma: f64,
    pub weights: LossWeights,
    pub th_epe: usize,
    pub threshold: f64,
    pub corners: Vec<ProcessCorner>,
    pub rules: MrcRuleSet,
    pub mrc_enabled: bool,
    /// Gate distance added to every rule (px). `None` = `2·max_step + 1`,
    /// enough that a single clipped step cannot cross a rule.
    pub gate_margin: Option<f64>,
    pub sraf_enabled: bool,
    pub sraf: SrafConfig,
    pub gradient_mode: GradientMode,
    /// Heavy-ball momentum on the scalar edge gradients (0 = plain descent).
    pub momentum: f64,
    /// Stop once EPE is zero and hard L2 stopped improving.
    pub early_stop: bool,
    /// Return the evaluated state with the lowest total loss instead of the
    /// last one. Rounding makes late iterations cycle between neighbouring
    /// states; this picks the better end of the cycle.
    pub keep_best: bool,
    /// Seed for synthetic kernels when no kernel file is given.
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            learning_rate: 1.0,
            max_step: 2.0,
            seg_length: 80.0,
            min_segment_length: None,
            alpha: 50.0,
            beta: 50.0,
            gamma: 50.0,
            weights: LossWeights::default(),
            th_epe: 15,
            threshold: 0.225,
            corners: default_corners(),
            rules: MrcRuleSet::default(),
            mrc_enabled: true,
            gate_margin: None,
            sraf_enabled: false,
            sraf: SrafConfig::default(),
            gradient_mode: GradientMode::Midpoint,
            momentum: 0.0,
            early_stop: false,
            keep_best: true,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("`{name}` must be positive, got {v}")))
            }
        };
        pos("learning_rate", self.learning_rate)?;
        pos("max_step", self.max_step)?;
        pos("seg_length", self.seg_length)?;
        pos("alpha", self.alpha)?;
        pos("beta", self.beta)?;
        pos("gamma", self.gamma)?;
        pos("threshold", self.threshold)?;
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must be in [0, 1)"));
        }
        if let Some(m) = self.min_segment_length {
            if !(m >= 0.0) {
                return Err(Error::config("min_segment_length must be >= 0"));
            }
        }
        if let Some(m) = self.gate_margin {
            if !(m >= 0.0) {
                return Err(Error::config("gate_margin must be >= 0"));
            }
        }
        self.weights.validate()?;
        self.rules()?;
        corner_roles(&self.corners)?;
        Ok(())
    }

    /// Rule set with the configured gate steepness.
    pub fn rules(&self) -> Result<MrcRuleSet> {
        let r = MrcRuleSet {
            beta: self.beta,
            ..self.rules
        };
        r.validate()?;
        Ok(r)
    }

    pub fn gate_margin(&self) -> f64 {
        self.gate_margin.unwrap_or(2.0 * self.max_step + 1.0)
    }

    fn min_segment(&self) -> f64 {
        self.min_segment_length.unwrap_or(self.rules.min_width)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub l2: f64,
    pub pvb: f64,
    pub epe: f64,
    pub total: f64,
    /// Hard-threshold nominal L2 and EPE count of the mask evaluated this iteration.
    pub hard_l2: f64,
    pub epe_count: usize,
    pub max_displacement: f64,
    pub gate_activations: usize,
    pub srafs: usize,
}

impl IterationLog {
    pub const CSV_HEADER: &'static str =
        "iteration,l2,pvb,epe,total,hard_l2,epe_count,max_displacement,gate_activations,srafs";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.9e},{:.9e},{:.9e},{:.9e},{},{},{:.6},{},{}",
            self.iteration,
            self.l2,
            self.pvb,
            self.epe,
            self.total,
            self.hard_l2,
            self.epe_count,
            self.max_displacement,
            self.gate_activations,
            self.srafs
        )
    }
}

#[derive(Clone, Debug)]
pub struct OptimizeResult {
    /// Final unrounded segment coordinates.
    pub segments: SegmentSet,
    /// Final rounded, corner-merged geometry (what `mask` rasterizes).
    pub merged: SegmentSet,
    pub mask: Mask,
    pub target: Mask,
    pub initial_metrics: MetricsReport,
    pub metrics: MetricsReport,
    pub log: Vec<IterationLog>,
    /// Assist features present at the start and how many were pruned.
    pub srafs_seeded: usize,
    pub srafs_pruned: usize,
}

/// Debug-build guard that the per-iteration stages run in order.
#[derive(Default)]
struct StageCounter {
    #[cfg(debug_assertions)]
    counts: [usize; 6],
}

impl StageCounter {
    #[inline]
    fn hit(&mut self, _stage: usize) {
        #[cfg(debug_assertions)]
        {
            if _stage > 0 {
                debug_assert_eq!(
                    self.counts[_stage - 1],
                    self.counts[_stage] + 1,
                    "stage {_stage} ran out of order"
                );
            }
            self.counts[_stage] += 1;
        }
    }
}

/// Optimizes with one kernel set used by every corner.
pub fn optimize(layout: &Layout, config: &OptimizerConfig, kernels: &KernelSet) -> Result<OptimizeResult> {
    optimize_with_kernel_sets(layout, config, std::slice::from_ref(kernels))
}

pub fn optimize_with_kernel_sets(
    layout: &Layout,
    config: &OptimizerConfig,
    kernel_sets: &[KernelSet],
) -> Result<OptimizeResult> {
    config.validate()?;
    layout.validate()?;
    let rules = config.rules()?;
    let (w, h) = (layout.width, layout.height);
    let sim = Simulator::new(kernel_sets, w, h)?;
    let roles = corner_roles(&config.corners)?;

    let target_set = segment_edges_with_min(&layout.polygons, config.seg_length, config.min_segment())?;
    let target = rasterize(&target_set, w, h)?;
    let plan = EpeSamplePlan::from_target(&target_set, config.th_epe, config.gamma, w, h)?;

    let mut sraf_polys = layout.srafs.clone();
    if config.sraf_enabled && sraf_polys.is_empty() {
        let seeds = generate_sraf_seeds(
            &target,
            &kernel_sets[0],
            &rules,
            &config.sraf,
            config.alpha,
            config.threshold,
        )?;
        log::info!("placed {} assist-feature seeds", seeds.len());
        sraf_polys = seeds.iter().map(|s| s.polygon()).collect::<Result<_>>()?;
    }
    let mut s = target_set.clone();
    if !sraf_polys.is_empty() {
        let sraf_set = segment_edges_with_min(&sraf_polys, config.seg_length, rules.sraf_min_width)?;
        s.append(&sraf_set, true);
    }
    let srafs_seeded = sraf_polys.len();
    let mut srafs_pruned = 0;

    let initial_mask = rasterize(&merge_corners(&ste_round(&s))?, w, h)?;
    let initial_metrics = evaluate(&initial_mask, &target, &sim, &config.corners, config.threshold, &plan)?;
    log::info!("initial: L2 {} PVB {} EPE {}", initial_metrics.l2, initial_metrics.pvb, initial_metrics.epe_count);

    let margin = config.gate_margin();
    let radius = rules.search_radius().max(rules.gate_spacing() + margin);
    let mut velocity = vec![0.0; s.len()];
    let mut stages = StageCounter::default();
    let mut log_rows: Vec<IterationLog> = Vec::with_capacity(config.iterations);
    let mut best_l2 = f64::INFINITY;
    let mut stale = 0usize;
    let mut best: Option<(f64, SegmentSet)> = None;

    for it in 0..config.iterations {
        stages.hit(0);
        let rounded = ste_round(&s);
        stages.hit(1);
        let merged = merge_corners(&rounded)?;
        stages.hit(2);
        let mask = rasterize(&merged, w, h)?;
        stages.hit(3);
        let fwd = ForwardPass::run(&sim, &mask, &config.corners, config.alpha, config.threshold)?;
        let bundle = total_loss_and_grad(&sim, &fwd, &target, &plan, &config.weights)?;
        stages.hit(4);

        let nominal = fwd.intensity(roles.nominal).map(|v| if v > config.threshold { 1.0 } else { 0.0 });
        let hard_l2 = metric_l2(&nominal, &target)?;
        let epe_count = metric_epe(&nominal, &target, &plan)?;

        if !bundle.total.is_finite() || !bundle.dl_dm.all_finite() {
            log::error!("non-finite loss at iteration {it}");
            return Err(Error::Diverged {
                iteration: it,
                log: log_rows,
            });
        }

        if config.keep_best && best.as_ref().is_none_or(|(t, _)| bundle.total < *t) {
            best = Some((bundle.total, s.clone()));
        }

        // Straight-through: the gradient w.r.t. rounded coordinates is used
        // unchanged for the unrounded ones.
        let mut eg = compute_edge_gradients_with(&bundle.dl_dm, &merged, &s.velocities, config.gradient_mode);
        let mut gate_activations = 0;
        if config.mrc_enabled {
            let pairs = extract_check_pairs_with_margin(&merged, &rules, radius, 2.0 * config.max_step);
            let gates = compute_gates(s.len(), &pairs, &rules, margin);
            gate_activations = apply_gates(&mut eg.scalar, &gates);
        }

        let mut steps = Vec::with_capacity(s.len());
        for (i, g) in eg.scalar.iter().enumerate() {
            velocity[i] = config.momentum * velocity[i] + g;
            let st = config.learning_rate * velocity[i];
            steps.push(if st.is_finite() { st.clamp(-config.max_step, config.max_step) } else { st });
        }
        let max_displacement = steps.iter().filter(|v| v.is_finite()).fold(0.0f64, |m, v| m.max(v.abs()));
        let (next, skipped) = apply_step(&s, &EdgeGradient::from_scalar(steps, &s.velocities), 1.0)?;
        if !skipped.is_empty() {
            log::warn!("iteration {it}: {} segments skipped (non-finite gradient)", skipped.len());
            for &i in &skipped {
                velocity[i] = 0.0;
            }
        }
        s = next;
        stages.hit(5);

        let row = IterationLog {
            iteration: it,
            l2: bundle.l2,
            pvb: bundle.pvb,
            epe: bundle.epe,
            total: bundle.total,
            hard_l2,
            epe_count,
            max_displacement,
            gate_activations,
            srafs: s.rings.iter().filter(|r| r.sraf).count(),
        };
        log::debug!(
            "iter {it}: total {:.4} l2 {:.1} pvb {:.1} epe {:.3} hard_l2 {hard_l2} epe# {epe_count} gates {gate_activations}",
            row.total,
            row.l2,
            row.pvb,
            row.epe
        );
        log_rows.push(row);

        if config.sraf.prune_every > 0 && (it + 1) % config.sraf.prune_every == 0 {
            let dropped = prune_srafs(&mut s, &mut velocity, &sim, config, &rules, w, h)?;
            if dropped > 0 {
                // Earlier snapshots still hold the removed features.
                best = None;
            }
            srafs_pruned += dropped;
        }

        if config.early_stop {
            if hard_l2 < best_l2 * (1.0 - 1e-3) {
                best_l2 = hard_l2;
                stale = 0;
            } else {
                stale += 1;
            }
            if epe_count == 0 && stale >= 10 {
                log::info!("early stop at iteration {it}");
                break;
            }
        }
    }

    if let Some((best_total, snapshot)) = best {
        let mask = rasterize(&merge_corners(&ste_round(&s))?, w, h)?;
        let fwd = ForwardPass::run(&sim, &mask, &config.corners, config.alpha, config.threshold)?;
        let last = total_loss_and_grad(&sim, &fwd, &target, &plan, &config.weights)?.total;
        if best_total < last {
            log::info!("returning the best evaluated state (loss {best_total:.4} < final {last:.4})");
            s = snapshot;
        }
    }
    loop {
        let dropped = prune_srafs(&mut s, &mut velocity, &sim, config, &rules, w, h)?;
        if dropped == 0 {
            break;
        }
        srafs_pruned += dropped;
    }
    let merged = merge_corners(&ste_round(&s))?;
    let mask = rasterize(&merged, w, h)?;
    let metrics = evaluate(&mask, &target, &sim, &config.corners, config.threshold, &plan)?;
    log::info!("final: L2 {} PVB {} EPE {} shots {}", metrics.l2, metrics.pvb, metrics.epe_count, metrics.shots);
    Ok(OptimizeResult {
        segments: s,
        merged,
        mask,
        target,
        initial_metrics,
        metrics,
        log: log_rows,
        srafs_seeded,
        srafs_pruned,
    })
}

/// Drops assist features that print at the nominal corner or have become
/// narrower than the configured minimum. Returns how many were removed.
fn prune_srafs(
    s: &mut SegmentSet,
    velocity: &mut Vec<f64>,
    sim: &Simulator,
    config: &OptimizerConfig,
    rules: &MrcRuleSet,
    w: usize,
    h: usize,
) -> Result<usize> {
    let sraf_rings: Vec<usize> = (0..s.rings.len()).filter(|&r| s.rings[r].sraf).collect();
    if sraf_rings.is_empty() {
        return Ok(0);
    }
    let merged = merge_corners(&ste_round(s))?;
    let mask = rasterize(&merged, w, h)?;
    let roles = corner_roles(&config.corners)?;
    let nominal = sim
        .intensity(&mask, config.corners[roles.nominal].kernel_set)?
        .map(|v| if v > config.threshold { 1.0 } else { 0.0 });
    let min_width = config.sraf.min_width.max(rules.sraf_min_width);
    let mut drop = Vec::new();
    for &r in &sraf_rings {
        let others: Vec<usize> = (0..merged.rings.len()).filter(|&o| o != r).collect();
        let alone = merged.without_rings(&others);
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in alone.coords.iter().flatten() {
            x0 = x0.min(c[0]);
            y0 = y0.min(c[1]);
            x1 = x1.max(c[0]);
            y1 = y1.max(c[1]);
        }
        let narrow = (x1 - x0) < min_width || (y1 - y0) < min_width;
        let footprint = rasterize(&alone, w, h)?;
        let prints = footprint
            .data()
            .iter()
            .zip(nominal.data())
            .any(|(&f, &z)| f > 0.0 && z > 0.0);
        if narrow || prints {
            log::info!("pruning assist feature ring {r} (narrow: {narrow}, prints: {prints})");
            drop.push(r);
        }
    }
    if drop.is_empty() {
        return Ok(0);
    }
    let keep: Vec<bool> = (0..s.len()).map(|i| !drop.contains(&s.info[i].ring)).collect();
    let mut k = 0;
    velocity.retain(|_| {
        k += 1;
        keep[k - 1]
    });
    *s = s.without_rings(&drop);
    Ok(drop.len())
}

/// Wall-clock timing, written separately from the deterministic outputs.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Timing {
    pub tat_seconds: f64,
    pub threads: usize,
}

/// Synthetic kernels used when no kernel file is supplied.
pub fn default_kernels(config: &OptimizerConfig) -> Result<KernelSet> {
    crate::litho::make_synthetic_kernels_with(crate::litho::SyntheticKernelParams {
        seed: config.seed,
        ..Default::default()
    })
}

/// Loads inputs, optimizes and writes `mask.pgm`, `geometry.json`,
/// `metrics.json`, `convergence.csv` and `timing.json` into `out_dir`.
pub fn run_from_config(
    layout_path: &Path,
    config: &OptimizerConfig,
    kernel_paths: &[&Path],
    out_dir: &Path,
) -> Result<OptimizeResult> {
    let layout = io::read_layout(layout_path)?;
    let kernel_sets = if kernel_paths.is_empty() {
        vec![default_kernels(config)?]
    } else {
        kernel_paths.iter().map(|p| io::read_kernels(p)).collect::<Result<Vec<_>>>()?
    };
    run_layout(&layout, config, &kernel_sets, out_dir)
}

/// Optimizes an in-memory layout and writes the same files as
/// [`run_from_config`].
pub fn run_layout(
    layout: &Layout,
    config: &OptimizerConfig,
    kernel_sets: &[KernelSet],
    out_dir: &Path,
) -> Result<OptimizeResult> {
    let start = Instant::now();
    let mut result = optimize_with_kernel_sets(layout, config, kernel_sets)?;
    let tat = start.elapsed().as_secs_f64();
    result.metrics.tat_seconds = tat;
    write_outputs(&result, layout.width, layout.height, out_dir)?;
    io::write_json(
        &out_dir.join("timing.json"),
        &Timing {
            tat_seconds: tat,
            threads: crate::par::current_threads(),
        },
    )?;
    Ok(result)
}

pub fn write_outputs(result: &OptimizeResult, width: usize, height: usize, out_dir: &Path) -> Result<()> {
    io::write_pgm(&out_dir.join("mask.pgm"), &result.mask)?;
    io::write_geometry(&out_dir.join("geometry.json"), &result.merged, width, height)?;
    io::write_json(&out_dir.join("metrics.json"), &result.metrics)?;
    io::write_csv(
        &out_dir.join("convergence.csv"),
        IterationLog::CSV_HEADER,
        result.log.iter().map(IterationLog::csv_row),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polygon;
    use crate::litho::make_synthetic_kernels;

    fn small() -> (Layout, KernelSet) {
        let l = Layout::new(128, 128, vec![Polygon::rect(34.0, 34.0, 94.0, 94.0).unwrap()]);
        (l, make_synthetic_kernels(31, 3, 1.35).unwrap())
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let bad = OptimizerConfig {
            max_step: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig {
            corners: vec![ProcessCorner::dose(0.9)],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_iterations_leave_geometry() {
        let (l, k) = small();
        let cfg = OptimizerConfig {
            iterations: 0,
            ..Default::default()
        };
        let r = optimize(&l, &cfg, &k).unwrap();
        assert_eq!(r.mask, r.target);
        assert_eq!(r.metrics, r.initial_metrics);
        assert!(r.log.is_empty());
    }

    #[test]
    fn steps_are_clipped() {
        let (l, k) = small();
        let cfg = OptimizerConfig {
            iterations: 3,
            learning_rate: 1e6,
            ..Default::default()
        };
        let r = optimize(&l, &cfg, &k).unwrap();
        assert!(r.log.iter().all(|row| row.max_displacement <= 2.0 + 1e-12));
        let start = segment_edges_with_min(&l.polygons, 80.0, 40.0).unwrap();
        assert!(r.segments.max_displacement(&start) <= 6.0 + 1e-9);
    }

    #[test]
    fn reproducible() {
        let (l, k) = small();
        let cfg = OptimizerConfig {
            iterations: 4,
            ..Default::default()
        };
        let a = optimize(&l, &cfg, &k).unwrap();
        let b = optimize(&l, &cfg, &k).unwrap();
        assert_eq!(a.segments.coords, b.segments.coords);
        assert_eq!(a.log, b.log);
    }
}

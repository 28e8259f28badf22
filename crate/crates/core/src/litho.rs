//! Sum-of-coherent-systems imaging, resist models and process corners.

use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::grid::{AerialImage, Grid, Mask, ResistImage};
use crate::par;

pub const WAVELENGTH_NM: f64 = 193.0;

/// `N_k` complex `K × K` kernels (row-major, centred at `K / 2`) with
/// positive, descending weights.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSet {
    size: usize,
    kernels: Vec<Vec<Complex32>>,
    weights: Vec<f64>,
    pub label: String,
    /// Share of the full source energy captured by these kernels, when known.
    pub energy_fraction: Option<f64>,
}

impl KernelSet {
    pub fn new(size: usize, kernels: Vec<Vec<Complex32>>, weights: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if size == 0 || size.is_multiple_of(2) {
            return Err(Error::config(format!("kernel size must be odd, got {size}")));
        }
        if kernels.is_empty() || kernels.len() != weights.len() {
            return Err(Error::config(format!(
                "need at least one kernel and one weight per kernel (got {} kernels, {} weights)",
                kernels.len(),
                weights.len()
            )));
        }
        if let Some(k) = kernels.iter().position(|k| k.len() != size * size) {
            return Err(Error::config(format!("kernel {k} does not have {size}x{size} taps")));
        }
        if kernels.iter().flatten().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::config("kernel taps must be finite"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::config("kernel weights must be positive and finite"));
        }
        if weights.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::config("kernel weights must be sorted in descending order"));
        }
        Ok(Self {
            size,
            kernels,
            weights,
            label: label.into(),
            energy_fraction: None,
        })
    }

    /// One-tap identity kernel: `I = |M|²`.
    pub fn delta() -> Self {
        Self::new(1, vec![vec![Complex32::new(1.0, 0.0)]], vec![1.0], "delta").expect("valid")
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn count(&self) -> usize {
        self.kernels.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kernel(&self, k: usize) -> &[Complex32] {
        &self.kernels[k]
    }

    /// Tap at offset `(dx, dy)` from the centre, promoted to 64 bits.
    pub fn tap(&self, k: usize, dx: i64, dy: i64) -> Complex64 {
        let c = (self.size / 2) as i64;
        let (i, j) = (dx + c, dy + c);
        if i < 0 || j < 0 || i >= self.size as i64 || j >= self.size as i64 {
            return Complex64::default();
        }
        let v = self.kernels[k][j as usize * self.size + i as usize];
        Complex64::new(v.re as f64, v.im as f64)
    }

    /// Kernels rotated by 180°: `h'(u) = h(−u)`.
    pub fn flipped(&self) -> KernelSet {
        let mut out = self.clone();
        for k in out.kernels.iter_mut() {
            k.reverse();
        }
        out
    }

    pub fn conjugated(&self) -> KernelSet {
        let mut out = self.clone();
        for c in out.kernels.iter_mut().flatten() {
            *c = c.conj();
        }
        out
    }

    /// The `n` strongest kernels.
    pub fn truncated(&self, n: usize) -> Result<KernelSet> {
        if n == 0 || n > self.count() {
            return Err(Error::config(format!("cannot keep {n} of {} kernels", self.count())));
        }
        let mut out = self.clone();
        out.kernels.truncate(n);
        out.weights.truncate(n);
        Ok(out)
    }

    /// Centre crop to an odd `size` no larger than the current one.
    pub fn cropped(&self, size: usize) -> Result<KernelSet> {
        if size.is_multiple_of(2) || size == 0 || size > self.size {
            return Err(Error::config(format!("cannot crop size {} kernels to {size}", self.size)));
        }
        if size == self.size {
            return Ok(self.clone());
        }
        let off = (self.size - size) / 2;
        let kernels = self
            .kernels
            .iter()
            .map(|k| {
                (0..size)
                    .flat_map(|j| (0..size).map(move |i| (i, j)))
                    .map(|(i, j)| k[(j + off) * self.size + i + off])
                    .collect()
            })
            .collect();
        let mut ks = KernelSet::new(size, kernels, self.weights.clone(), self.label.clone())?;
        ks.energy_fraction = self.energy_fraction;
        Ok(ks)
    }

    /// Kernels for a grid coarser by `factor`. Each coarse tap sums the
    /// fine taps it covers, with half weight on taps shared by two coarse
    /// cells, so the DC gain is preserved and the binning is symmetric.
    pub fn downsampled(&self, factor: usize) -> Result<KernelSet> {
        if factor == 0 {
            return Err(Error::config("downsampling factor must be positive"));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let c = (self.size / 2) as i64;
        let f = factor as i64;
        let umax = (2 * c + f) / (2 * f);
        let size = (2 * umax + 1) as usize;
        let weight_1d = |d: i64| -> f64 {
            let twice = 2 * d.abs();
            if twice < f {
                1.0
            } else if twice == f {
                0.5
            } else {
                0.0
            }
        };
        let kernels = (0..self.count())
            .map(|k| {
                let mut out = vec![Complex64::default(); size * size];
                for j in -c..=c {
                    for i in -c..=c {
                        let v = self.tap(k, i, j);
                        for uy in ((j - f) / f - 1)..=((j + f) / f + 1) {
                            let wy = weight_1d(j - f * uy);
                            if wy == 0.0 || uy.abs() > umax {
                                continue;
                            }
                            for ux in ((i - f) / f - 1)..=((i + f) / f + 1) {
                                let wx = weight_1d(i - f * ux);
                                if wx == 0.0 || ux.abs() > umax {
                                    continue;
                                }
                                out[((uy + umax) as usize) * size + (ux + umax) as usize] += v * (wx * wy);
                            }
                        }
                    }
                }
                out.into_iter()
                    .map(|v| Complex32::new(v.re as f32, v.im as f32))
                    .collect()
            })
            .collect();
        let mut ks = KernelSet::new(size, kernels, self.weights.clone(), format!("{} /{factor}", self.label))?;
        ks.energy_fraction = self.energy_fraction;
        Ok(ks)
    }

    /// Clear-field intensity `Σ σ_k |Σ_u h_k(u)|²`.
    pub fn clear_field_intensity(&self) -> f64 {
        self.kernels
            .iter()
            .zip(&self.weights)
            .map(|(k, w)| {
                let dc: Complex64 = k.iter().map(|c| Complex64::new(c.re as f64, c.im as f64)).sum();
                w * dc.norm_sqr()
            })
            .sum()
    }
}

/// Parameters of the synthetic imaging model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticKernelParams {
    pub size: usize,
    pub count: usize,
    /// Numerical-aperture proxy; the pupil cutoff is `na / 193` cycles/nm.
    pub na: f64,
    /// Source radius relative to the pupil cutoff.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticKernelParams {
    fn default() -> Self {
        Self {
            size: 255,
            count: 24,
            na: 1.35,
            sigma: 0.6,
            seed: 0,
        }
    }
}

/// Radius of the discretised source, in grid steps.
const SOURCE_RADIUS: i64 = 5;

/// Source points ordered strongest first; opposite points are adjacent so
/// every prefix of odd length is point-symmetric.
fn source_points() -> Vec<(i64, i64)> {
    let mut pts = Vec::new();
    for j in -SOURCE_RADIUS..=SOURCE_RADIUS {
        for i in -SOURCE_RADIUS..=SOURCE_RADIUS {
            if i * i + j * j <= SOURCE_RADIUS * SOURCE_RADIUS {
                pts.push((i, j));
            }
        }
    }
    let key = |&(i, j): &(i64, i64)| {
        // Fold the angle into [0, π) so a point and its opposite share a key.
        let mut a = (j as f64).atan2(i as f64);
        if a < 0.0 {
            a += std::f64::consts::PI;
        }
        if a >= std::f64::consts::PI - 1e-12 {
            a = 0.0;
        }
        let upper = j > 0 || (j == 0 && i > 0);
        (i * i + j * j, (a * 1e9).round() as i64, !upper)
    };
    pts.sort_by_key(key);
    pts
}

/// Number of distinct kernels the synthetic source can provide.
pub fn synthetic_family_size() -> usize {
    source_points().len()
}

/// Deterministic synthetic kernels with seed 0.
pub fn make_synthetic_kernels(size: usize, count: usize, na: f64) -> Result<KernelSet> {
    make_synthetic_kernels_with(SyntheticKernelParams {
        size,
        count,
        na,
        ..Default::default()
    })
}

/// Abbe-style kernels: source point `s_k` on a square grid inside the
/// partial-coherence disc contributes the windowed circular-pupil impulse
/// response tilted by `exp(i 2π s_k·x)`. Weights follow a Gaussian source
/// profile and are scaled so a clear mask images to intensity 1. The seed
/// only sets a global phase per kernel, which leaves intensities unchanged.
pub fn make_synthetic_kernels_with(p: SyntheticKernelParams) -> Result<KernelSet> {
    if p.size == 0 || p.size.is_multiple_of(2) {
        return Err(Error::config(format!("kernel size must be odd, got {}", p.size)));
    }
    let pts = source_points();
    if p.count == 0 || p.count > pts.len() {
        return Err(Error::config(format!(
            "kernel count must be in 1..={}, got {}",
            pts.len(),
            p.count
        )));
    }
    if !(p.na > 0.0 && p.na.is_finite()) || !(p.sigma > 0.0 && p.sigma <= 1.0) {
        return Err(Error::config("na must be positive and sigma in (0, 1]"));
    }
    let fc = p.na / WAVELENGTH_NM;
    let step = p.sigma * fc / SOURCE_RADIUS as f64;
    let spread = SOURCE_RADIUS as f64 * 0.5;
    let source_weight = |(i, j): (i64, i64)| (-((i * i + j * j) as f64) / (2.0 * spread * spread)).exp();
    let total: f64 = pts.iter().map(|&q| source_weight(q)).sum();

    let c = (p.size / 2) as i64;
    let window_r = (c + 1) as f64;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let phases: Vec<f64> = (0..p.count).map(|_| rng.gen_range(0.0..two_pi)).collect();

    let kernels: Vec<Vec<Complex32>> = par::map_range(p.count, |k| {
        let (a, b) = pts[k];
        let mut taps = Vec::with_capacity(p.size * p.size);
        for y in -c..=c {
            for x in -c..=c {
                let r = ((x * x + y * y) as f64).sqrt();
                let psf = if r == 0.0 {
                    std::f64::consts::PI * fc * fc
                } else {
                    fc * libm::j1(two_pi * fc * r) / r
                };
                let win = if r < window_r {
                    0.5 * (1.0 + (std::f64::consts::PI * r / window_r).cos())
                } else {
                    0.0
                };
                // Integer dot product keeps rotated source points bit-identical.
                let ph = two_pi * step * ((a * x + b * y) as f64) + phases[k];
                let v = Complex64::from_polar(psf * win, ph);
                taps.push(Complex32::new(v.re as f32, v.im as f32));
            }
        }
        taps
    });
    let raw: Vec<f64> = pts[..p.count].iter().map(|&q| source_weight(q)).collect();
    let mut ks = KernelSet::new(p.size, kernels, raw.clone(), format!("synthetic na={} sigma={}", p.na, p.sigma))?;
    let clear = ks.clear_field_intensity();
    ks.weights = raw.iter().map(|w| w / clear).collect();
    ks.energy_fraction = Some(raw.iter().sum::<f64>() / total);
    Ok(ks)
}

/// A process condition: dose multiplies the aerial image, and
/// `kernel_set` selects an alternate (e.g. defocused) kernel set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessCorner {
    pub dose_scale: f64,
    #[serde(default)]
    pub kernel_set: usize,
}

impl ProcessCorner {
    pub fn dose(dose_scale: f64) -> Self {
        Self {
            dose_scale,
            kernel_set: 0,
        }
    }
}

pub fn default_corners() -> Vec<ProcessCorner> {
    vec![ProcessCorner::dose(0.98), ProcessCorner::dose(1.0), ProcessCorner::dose(1.02)]
}

/// Which corners play the nominal, max and min roles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CornerRoles {
    pub nominal: usize,
    pub max: usize,
    pub min: usize,
}

/// Nominal is the first corner with dose 1 on kernel set 0; max and min are
/// the highest and lowest doses (first on ties).
pub fn corner_roles(corners: &[ProcessCorner]) -> Result<CornerRoles> {
    if let Some(c) = corners.iter().find(|c| !(c.dose_scale > 0.0 && c.dose_scale.is_finite())) {
        return Err(Error::config(format!("dose_scale must be positive, got {}", c.dose_scale)));
    }
    let nominal = corners
        .iter()
        .position(|c| c.dose_scale == 1.0 && c.kernel_set == 0)
        .ok_or_else(|| Error::config("process corners must include a nominal corner (dose 1.0, kernel set 0)"))?;
    let mut max = nominal;
    let mut min = nominal;
    for (i, c) in corners.iter().enumerate() {
        if c.dose_scale > corners[max].dose_scale {
            max = i;
        }
        if c.dose_scale < corners[min].dose_scale {
            min = i;
        }
    }
    Ok(CornerRoles { nominal, max, min })
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `Z = 1` where `I > I_th` (strict), else 0.
pub fn resist_hard(intensity: &AerialImage, threshold: f64) -> ResistImage {
    intensity.map(|i| if i > threshold { 1.0 } else { 0.0 })
}

/// `Z = σ(α (I − I_th))`.
pub fn resist_sigmoid(intensity: &AerialImage, alpha: f64, threshold: f64) -> ResistImage {
    intensity.map(|i| sigmoid(alpha * (i - threshold)))
}

#[derive(Debug)]
struct PreparedSet {
    weights: Vec<f64>,
    spectra: Vec<Vec<Complex64>>,
}

/// FFT-based imaging engine for a fixed clip size. Kernel spectra are
/// computed once; every method is `&self` and safe to share across threads.
#[derive(Debug)]
pub struct Simulator {
    width: usize,
    height: usize,
    fft: Fft2,
    sets: Vec<PreparedSet>,
}

/// Coherent fields `E_k = M ⊗ h_k` and the intensity they add up to.
#[derive(Clone, Debug)]
pub struct Fields {
    pub set: usize,
    pub fields: Vec<Vec<Complex64>>,
    pub intensity: AerialImage,
}

impl Simulator {
    pub fn new(kernel_sets: &[KernelSet], width: usize, height: usize) -> Result<Self> {
        if kernel_sets.is_empty() {
            return Err(Error::config("at least one kernel set is required"));
        }
        if width == 0 || height == 0 {
            return Err(Error::config("clip size must be positive"));
        }
        let fft = Fft2::new(width, height);
        let mut sets = Vec::with_capacity(kernel_sets.len());
        for ks in kernel_sets {
            if ks.size() > width || ks.size() > height {
                return Err(Error::config(format!(
                    "kernel size {} exceeds the {width}x{height} clip",
                    ks.size()
                )));
            }
            let c = (ks.size() / 2) as i64;
            let spectra = (0..ks.count())
                .map(|k| {
                    let mut buf = vec![Complex64::default(); width * height];
                    for dy in -c..=c {
                        for dx in -c..=c {
                            let x = dx.rem_euclid(width as i64) as usize;
                            let y = dy.rem_euclid(height as i64) as usize;
                            buf[y * width + x] += ks.tap(k, dx, dy);
                        }
                    }
                    fft.forward(&mut buf);
                    buf
                })
                .collect();
            sets.push(PreparedSet {
                weights: ks.weights().to_vec(),
                spectra,
            });
        }
        Ok(Self {
            width,
            height,
            fft,
            sets,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_sets(&self) -> usize {
        self.sets.len()
    }

    pub fn num_kernels(&self, set: usize) -> usize {
        self.sets[set].weights.len()
    }

    fn check(&self, g: &Grid, set: usize) -> Result<()> {
        if g.shape() != (self.width, self.height) {
            return Err(Error::Config(format!(
                "mask is {}x{} but the simulator expects {}x{}",
                g.width(),
                g.height(),
                self.width,
                self.height
            )));
        }
        if set >= self.sets.len() {
            return Err(Error::config(format!("kernel set {set} does not exist")));
        }
        Ok(())
    }

    /// Periodic convolution of every kernel with the mask.
    pub fn fields(&self, mask: &Mask, set: usize) -> Result<Fields> {
        self.check(mask, set)?;
        let mut mf: Vec<Complex64> = mask.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.forward(&mut mf);
        let ps = &self.sets[set];
        let mut fields = Vec::with_capacity(ps.spectra.len());
        let mut intensity = Grid::zeros(self.width, self.height);
        for (spec, &w) in ps.spectra.iter().zip(&ps.weights) {
            let mut e: Vec<Complex64> = mf.iter().zip(spec).map(|(a, b)| a * b).collect();
            self.fft.inverse(&mut e);
            for (i, v) in intensity.data_mut().iter_mut().zip(&e) {
                *i += w * v.norm_sqr();
            }
            fields.push(e);
        }
        Ok(Fields {
            set,
            fields,
            intensity,
        })
    }

    /// `I = Σ σ_k |M ⊗ h_k|²`.
    pub fn intensity(&self, mask: &Mask, set: usize) -> Result<AerialImage> {
        Ok(self.fields(mask, set)?.intensity)
    }

    /// Vector-Jacobian product of the intensity map: given `G = ∂L/∂I`,
    /// returns `∂L/∂M = Σ σ_k [h'_k ⊗ (G · conj E_k) + conj(h'_k) ⊗ (G · E_k)]`
    /// where `h'` is the 180°-rotated kernel. The two terms are complex
    /// conjugates of each other, so the sum is real; the imaginary residue
    /// is checked and discarded.
    pub fn backprop(&self, fields: &Fields, dl_di: &Grid) -> Result<Grid> {
        self.check(dl_di, fields.set)?;
        let ps = &self.sets[fields.set];
        if fields.fields.len() != ps.spectra.len() {
            return Err(Error::Contract("fields were not produced by this kernel set".into()));
        }
        let (w, h) = (self.width, self.height);
        let g = dl_di.data();
        let mut acc = vec![Complex64::default(); w * h];
        for ((e, spec), &sw) in fields.fields.iter().zip(&ps.spectra).zip(&ps.weights) {
            let mut f1: Vec<Complex64> = g.iter().zip(e).map(|(&gi, ei)| ei.conj() * gi).collect();
            let mut f2: Vec<Complex64> = g.iter().zip(e).map(|(&gi, ei)| ei * gi).collect();
            self.fft.forward(&mut f1);
            self.fft.forward(&mut f2);
            // FT of the flipped kernel is H(−f); FT of its conjugate is conj(H(f)).
            par::for_each_chunk_mut(&mut acc, w, |ky, row| {
                let ny = (h - ky) % h;
                for (kx, a) in row.iter_mut().enumerate() {
                    let nx = (w - kx) % w;
                    let idx = ky * w + kx;
                    *a += (f1[idx] * spec[ny * w + nx] + f2[idx] * spec[idx].conj()) * sw;
                }
            });
        }
        self.fft.inverse(&mut acc);
        let scale = acc.iter().fold(1.0f64, |m, v| m.max(v.re.abs()));
        let resid = acc.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
        if resid > 1e-9 * scale {
            return Err(Error::Contract(format!(
                "gradient has imaginary residue {resid:e} (scale {scale:e})"
            )));
        }
        Grid::from_vec(w, h, acc.into_iter().map(|v| v.re).collect())
    }
}

/// One-off SOCS simulation with a single kernel set.
pub fn simulate(mask: &Mask, kernels: &KernelSet) -> Result<AerialImage> {
    Simulator::new(std::slice::from_ref(kernels), mask.width(), mask.height())?.intensity(mask, 0)
}

#[derive(Clone, Debug)]
pub struct CornerImages {
    pub nominal: ResistImage,
    pub max: ResistImage,
    pub min: ResistImage,
}

/// Sigmoid resist images at the nominal, max-dose and min-dose corners.
pub fn simulate_corners(
    mask: &Mask,
    sim: &Simulator,
    corners: &[ProcessCorner],
    alpha: f64,
    threshold: f64,
) -> Result<CornerImages> {
    let roles = corner_roles(corners)?;
    let image = |c: ProcessCorner| -> Result<ResistImage> {
        let i = sim.intensity(mask, c.kernel_set)?;
        Ok(i.map(|v| sigmoid(alpha * (c.dose_scale * v - threshold))))
    };
    Ok(CornerImages {
        nominal: image(corners[roles.nominal])?,
        max: image(corners[roles.max])?,
        min: image(corners[roles.min])?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_kernels() -> KernelSet {
        make_synthetic_kernels_with(SyntheticKernelParams {
            size: 9,
            count: 3,
            na: 193.0 * 0.09,
            sigma: 0.6,
            seed: 7,
        })
        .unwrap()
    }

    #[test]
    fn sigmoid_reference_values() {
        let z = sigmoid(50.0 * 0.02);
        assert!((z - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(sigmoid(-1e6), 0.0);
        assert_eq!(sigmoid(1e6), 1.0);
    }

    #[test]
    fn hard_threshold_is_strict() {
        let i = Grid::filled(4, 4, 0.225);
        assert_eq!(resist_hard(&i, 0.225).sum(), 0.0);
        let j = Grid::filled(4, 4, 0.225 + 1e-12);
        assert_eq!(resist_hard(&j, 0.225).sum(), 16.0);
    }

    #[test]
    fn delta_kernel_is_identity() {
        let m = Grid::from_fn(8, 8, |x, y| ((x * 3 + y) % 2) as f64);
        assert_eq!(simulate(&m, &KernelSet::delta()).unwrap(), m);
    }

    #[test]
    fn zero_mask_zero_intensity() {
        let i = simulate(&Grid::zeros(16, 16), &test_kernels()).unwrap();
        assert_eq!(i.max_abs(), 0.0);
    }

    #[test]
    fn clear_field_normalized() {
        let ks = make_synthetic_kernels(31, 1, 1.35).unwrap();
        assert!((ks.clear_field_intensity() - 1.0).abs() < 1e-12);
        let i = simulate(&Grid::filled(64, 64, 1.0), &ks).unwrap();
        assert!((i.get(32, 32) - 1.0).abs() < 0.05);
    }

    #[test]
    fn weights_descend_and_energy_grows() {
        let mut last = 0.0;
        for n in 1..=24 {
            let ks = make_synthetic_kernels(15, n, 1.35).unwrap();
            assert!(ks.weights().windows(2).all(|w| w[0] >= w[1]));
            let e = ks.energy_fraction.unwrap();
            assert!(e >= last);
            last = e;
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        assert_eq!(test_kernels(), test_kernels());
        let other = make_synthetic_kernels_with(SyntheticKernelParams {
            seed: 8,
            ..SyntheticKernelParams {
                size: 9,
                count: 3,
                na: 193.0 * 0.09,
                sigma: 0.6,
                seed: 0,
            }
        })
        .unwrap();
        assert_ne!(test_kernels(), other);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(make_synthetic_kernels(10, 3, 1.35).is_err());
        assert!(make_synthetic_kernels(9, 0, 1.35).is_err());
        let ks = make_synthetic_kernels(33, 1, 1.35).unwrap();
        assert!(matches!(Simulator::new(&[ks], 32, 32), Err(Error::Config(_))));
    }

    #[test]
    fn flipped_spectrum_is_index_negation() {
        let ks = test_kernels();
        let (w, h) = (16, 12);
        let a = Simulator::new(&[ks.flipped()], w, h).unwrap();
        let b = Simulator::new(&[ks], w, h).unwrap();
        for k in 0..3 {
            for ky in 0..h {
                for kx in 0..w {
                    let neg = ((h - ky) % h) * w + (w - kx) % w;
                    let d = a.sets[0].spectra[k][ky * w + kx] - b.sets[0].spectra[k][neg];
                    assert!(d.norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn corners_need_nominal() {
        assert!(corner_roles(&[ProcessCorner::dose(0.9), ProcessCorner::dose(1.1)]).is_err());
        let r = corner_roles(&default_corners()).unwrap();
        assert_eq!((r.nominal, r.max, r.min), (1, 2, 0));
    }

    #[test]
    fn degenerate_corners_coincide() {
        let ks = test_kernels();
        let m = Grid::from_fn(16, 16, |x, y| ((4..10).contains(&x) && (3..12).contains(&y)) as u8 as f64);
        let sim = Simulator::new(&[ks], 16, 16).unwrap();
        let c = simulate_corners(&m, &sim, &[ProcessCorner::dose(1.0); 3], 50.0, 0.225).unwrap();
        assert_eq!(c.nominal, c.max);
        assert_eq!(c.nominal, c.min);
    }

    #[test]
    fn downsampling_preserves_dc() {
        let ks = make_synthetic_kernels(31, 5, 1.35).unwrap();
        let d = ks.downsampled(4).unwrap();
        assert_eq!(d.size() % 2, 1);
        assert!((d.clear_field_intensity() - 1.0).abs() < 1e-5);
    }
}

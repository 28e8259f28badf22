//! Row-column 2-D FFT on row-major complex buffers.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::par;

const ROWS_PER_TASK: usize = 8;

pub struct Fft2 {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.width, self.height)
    }
}

impl Fft2 {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Unnormalized forward transform, in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse transform scaled by `1 / (width · height)`, in place.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.row_inv, &self.col_inv);
        let s = 1.0 / (self.width * self.height) as f64;
        par::for_each_chunk_mut(data, self.width * ROWS_PER_TASK, |_, c| {
            c.iter_mut().for_each(|v| *v *= s);
        });
    }

    fn transform(&self, data: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.width * self.height);
        run_batched(data, self.width, row);
        let mut t = transpose(data, self.width, self.height);
        run_batched(&mut t, self.height, col);
        let back = transpose(&t, self.height, self.width);
        data.copy_from_slice(&back);
    }
}

fn run_batched(data: &mut [Complex64], len: usize, fft: &Arc<dyn Fft<f64>>) {
    par::for_each_chunk_mut(data, len * ROWS_PER_TASK, |_, chunk| {
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(chunk, &mut scratch);
    });
}

/// `w × h` row-major → `h × w` row-major.
fn transpose(data: &[Complex64], w: usize, h: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); w * h];
    par::for_each_chunk_mut(&mut out, h, |x, col| {
        for (y, v) in col.iter_mut().enumerate() {
            *v = data[y * w + x];
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let (w, h) = (12, 10);
        let data: Vec<Complex64> = (0..w * h)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let f = Fft2::new(w, h);
        let mut d = data.clone();
        f.forward(&mut d);
        f.inverse(&mut d);
        for (a, b) in d.iter().zip(&data) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn matches_naive_dft() {
        let (w, h) = (6, 4);
        let data: Vec<Complex64> = (0..w * h).map(|i| Complex64::new(i as f64, -(i as f64) * 0.5)).collect();
        let mut d = data.clone();
        Fft2::new(w, h).forward(&mut d);
        for ky in 0..h {
            for kx in 0..w {
                let mut s = Complex64::default();
                for y in 0..h {
                    for x in 0..w {
                        let ph = -2.0 * std::f64::consts::PI * ((kx * x) as f64 / w as f64 + (ky * y) as f64 / h as f64);
                        s += data[y * w + x] * Complex64::from_polar(1.0, ph);
                    }
                }
                assert!((s - d[ky * w + kx]).norm() < 1e-9);
            }
        }
    }
}

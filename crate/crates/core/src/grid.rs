//! Dense row-major real grids used for masks, aerial images and gradients.
//!
//! Pixel `(x, y)` lives at `data[y * width + x]`. Row 0 is `y = 0`.

use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

/// Mask transmission, binary after rasterization.
pub type Mask = Grid;
/// Aerial intensity.
pub type AerialImage = Grid;
/// Resist image, binary (hard threshold) or in (0, 1) (sigmoid).
pub type ResistImage = Grid;

impl Grid {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Contract(format!(
                "grid data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Value at signed coordinates, or `None` outside the grid.
    #[inline]
    pub fn get_checked(&self, x: i64, y: i64) -> Option<f64> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            None
        } else {
            Some(self.get(x as usize, y as usize))
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn ensure_shape(&self, other: &Grid) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                expected: self.shape(),
                got: other.shape(),
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync + Send) -> Grid {
        let mut out = self.clone();
        par::for_each_chunk_mut(&mut out.data, self.width.max(1), |_, row| {
            for v in row.iter_mut() {
                *v = f(*v);
            }
        });
        out
    }

    /// Elementwise combination of two same-shape grids.
    pub fn zip_map(&self, other: &Grid, f: impl Fn(f64, f64) -> f64 + Sync + Send) -> Result<Grid> {
        self.ensure_shape(other)?;
        let mut out = self.clone();
        let w = self.width.max(1);
        par::for_each_chunk_mut(&mut out.data, w, |r, row| {
            let o = &other.data[r * w..r * w + row.len()];
            for (v, b) in row.iter_mut().zip(o) {
                *v = f(*v, *b);
            }
        });
        Ok(out)
    }

    /// Sum of all pixels: row sums first, then rows in order, so the result
    /// does not depend on the thread count.
    pub fn sum(&self) -> f64 {
        self.sum_by(|v| v)
    }

    pub fn sum_by(&self, f: impl Fn(f64) -> f64 + Sync + Send) -> f64 {
        let w = self.width.max(1);
        let rows = par::map_chunks(&self.data, w, |_, row| row.iter().map(|&v| f(v)).sum::<f64>());
        rows.into_iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Number of pixels whose value is at least 0.5.
    pub fn count_on(&self) -> usize {
        self.data.iter().filter(|&&v| v >= 0.5).count()
    }

    /// Area-average downsampling by an integer factor. Trailing pixels that
    /// do not fill a whole block are dropped.
    pub fn downsample(&self, factor: usize) -> Grid {
        assert!(factor >= 1);
        let w = self.width / factor;
        let h = self.height / factor;
        let norm = 1.0 / (factor * factor) as f64;
        Grid::from_fn(w, h, |bx, by| {
            let mut s = 0.0;
            for dy in 0..factor {
                for dx in 0..factor {
                    s += self.get(bx * factor + dx, by * factor + dy);
                }
            }
            s * norm
        })
    }

    /// Shift with periodic wrap-around.
    pub fn roll(&self, dx: i64, dy: i64) -> Grid {
        let (w, h) = (self.width as i64, self.height as i64);
        Grid::from_fn(self.width, self.height, |x, y| {
            let sx = (x as i64 - dx).rem_euclid(w) as usize;
            let sy = (y as i64 - dy).rem_euclid(h) as usize;
            self.get(sx, sy)
        })
    }
}

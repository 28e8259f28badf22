//! File formats: layout JSON, binary kernel sets, PGM/raw masks, geometry
//! and rule files. See `docs/formats.md` for the byte-level layout.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex32;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Polygon, SegmentSet};
use crate::grid::{Grid, Mask};
use crate::litho::KernelSet;

/// A clip: its pixel size, the target polygons, and optional fixed
/// assist-feature polygons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub width: usize,
    pub height: usize,
    pub polygons: Vec<Polygon>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub srafs: Vec<Polygon>,
}

impl Layout {
    pub fn new(width: usize, height: usize, polygons: Vec<Polygon>) -> Self {
        Self {
            width,
            height,
            polygons,
            srafs: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("layout dimensions must be positive"));
        }
        if self.polygons.is_empty() {
            return Err(Error::geometry("layout has no polygons"));
        }
        for p in self.polygons.iter().chain(&self.srafs) {
            let (x0, y0, x1, y1) = p.bbox();
            if x0 < 0.0 || y0 < 0.0 || x1 > self.width as f64 || y1 > self.height as f64 {
                log::warn!("polygon bbox {:?} extends beyond the {}x{} clip", (x0, y0, x1, y1), self.width, self.height);
            }
        }
        Ok(())
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::parse(path.display().to_string(), e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path.display().to_string(), e))?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

/// Reads TOML or JSON depending on the file extension.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e)),
        Some("json") => serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e)),
        other => Err(Error::config(format!(
            "config {} must end in .toml or .json (got {other:?})",
            path.display()
        ))),
    }
}

pub fn read_layout(path: &Path) -> Result<Layout> {
    let l: Layout = read_json(path)?;
    l.validate()?;
    Ok(l)
}

pub fn write_layout(path: &Path, layout: &Layout) -> Result<()> {
    write_json(path, layout)
}

/// Serialized segment set: per-segment endpoint pairs plus ring membership.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryFile {
    pub width: usize,
    pub height: usize,
    pub rings: Vec<RingRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingRecord {
    pub sraf: bool,
    pub hole: bool,
    /// `[[x1, y1], [x2, y2]]` per segment in ring order.
    pub segments: Vec<[[f64; 2]; 2]>,
}

impl GeometryFile {
    pub fn from_segments(s: &SegmentSet, width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            rings: s
                .rings
                .iter()
                .map(|r| RingRecord {
                    sraf: r.sraf,
                    hole: r.hole,
                    segments: r.segments.iter().map(|&i| s.coords[i]).collect(),
                })
                .collect(),
        }
    }

    /// Rebuilds a segment set suitable for rasterization and rule checks.
    /// Velocities are recomputed from the ring orientation (material on the
    /// left of every segment).
    pub fn to_segments(&self) -> Result<SegmentSet> {
        let mut out = SegmentSet::default();
        for (r, ring) in self.rings.iter().enumerate() {
            if ring.segments.is_empty() {
                return Err(Error::geometry(format!("ring {r} has no segments")));
            }
            let base = out.len();
            let n = ring.segments.len();
            for (k, c) in ring.segments.iter().enumerate() {
                let (dx, dy) = (c[1][0] - c[0][0], c[1][1] - c[0][1]);
                let len = dx.abs() + dy.abs();
                let d = if len > 0.0 { [dx / len, dy / len] } else { [0.0, 0.0] };
                out.coords.push(*c);
                out.directions.push(d);
                out.velocities.push([d[1], -d[0]]);
                out.corner_flags.push(false);
                out.info.push(crate::geometry::SegmentInfo {
                    ring: r,
                    edge: k,
                    order_in_ring: k,
                    first_in_edge: true,
                    last_in_edge: true,
                });
            }
            out.rings.push(crate::geometry::Ring {
                segments: (base..base + n).collect(),
                hole: ring.hole,
                sraf: ring.sraf,
            });
        }
        out.check_closed()?;
        Ok(out)
    }
}

pub fn write_geometry(path: &Path, s: &SegmentSet, width: usize, height: usize) -> Result<()> {
    write_json(path, &GeometryFile::from_segments(s, width, height))
}

pub fn read_geometry(path: &Path) -> Result<GeometryFile> {
    read_json(path)
}

/// Kernel file: `u32 count, u32 size, count × f64 weights, count·size·size ×
/// (f32 re, f32 im)`, all little-endian, taps row-major.
pub fn encode_kernels(ks: &KernelSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + ks.count() * (8 + 8 * ks.size() * ks.size()));
    out.extend_from_slice(&(ks.count() as u32).to_le_bytes());
    out.extend_from_slice(&(ks.size() as u32).to_le_bytes());
    for w in ks.weights() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    for k in 0..ks.count() {
        for t in ks.kernel(k) {
            out.extend_from_slice(&t.re.to_le_bytes());
            out.extend_from_slice(&t.im.to_le_bytes());
        }
    }
    out
}

pub fn decode_kernels(bytes: &[u8], label: &str) -> Result<KernelSet> {
    let bad = |m: String| Error::parse(label.to_string(), m);
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        if pos + n > bytes.len() {
            return Err(bad(format!("truncated at byte {pos} (need {n} more)")));
        }
        let s = &bytes[pos..pos + n];
        pos += n;
        Ok(s)
    };
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize;
    let count = u32_at(take(4)?);
    let size = u32_at(take(4)?);
    if count == 0 || size == 0 {
        return Err(bad(format!("empty kernel set ({count} kernels of size {size})")));
    }
    let taps = size
        .checked_mul(size)
        .and_then(|t| t.checked_mul(count))
        .ok_or_else(|| bad("kernel dimensions overflow".into()))?;
    let expected = 8 + 8 * count + 8 * taps;
    if bytes.len() != expected {
        return Err(bad(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let mut weights = Vec::with_capacity(count);
    for _ in 0..count {
        weights.push(f64::from_le_bytes(take(8)?.try_into().expect("8 bytes")));
    }
    let mut kernels = Vec::with_capacity(count);
    for _ in 0..count {
        let raw = take(8 * size * size)?;
        kernels.push(
            raw.chunks_exact(8)
                .map(|c| {
                    Complex32::new(
                        f32::from_le_bytes(c[0..4].try_into().expect("4 bytes")),
                        f32::from_le_bytes(c[4..8].try_into().expect("4 bytes")),
                    )
                })
                .collect::<Vec<_>>(),
        );
    }
    KernelSet::new(size, kernels, weights, label)
}

pub fn write_kernels(path: &Path, ks: &KernelSet) -> Result<()> {
    write_bytes(path, &encode_kernels(ks))
}

pub fn read_kernels(path: &Path) -> Result<KernelSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_kernels(&bytes, &path.display().to_string())
}

/// Binary PGM (P5), 0 or 255 per pixel, first row is `y = 0`.
pub fn encode_pgm(mask: &Mask) -> Vec<u8> {
    let (w, h) = mask.shape();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(mask.data().iter().map(|&v| if v >= 0.5 { 255u8 } else { 0 }));
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Mask> {
    let bad = |m: &str| Error::parse("pgm", m);
    // Header: magic, width, height, maxval, separated by whitespace; comments skipped.
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let s = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if s == i {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[s..i]).map_err(|_| bad("non-ASCII header"))?.to_string());
    }
    if fields[0] != "P5" {
        return Err(bad("only binary P5 files are supported"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(bad("maxval must be in 1..=255"));
    }
    i += 1; // single whitespace after maxval
    let data = bytes.get(i..i + w * h).ok_or_else(|| bad("truncated pixel data"))?;
    Grid::from_vec(w, h, data.iter().map(|&b| if b as usize * 2 > maxval { 1.0 } else { 0.0 }).collect())
}

pub fn write_pgm(path: &Path, mask: &Mask) -> Result<()> {
    write_bytes(path, &encode_pgm(mask))
}

pub fn read_pgm(path: &Path) -> Result<Mask> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_pgm(&bytes)
}

/// Raw row-major bytes, 0 or 1 per pixel.
pub fn write_raw_mask(path: &Path, mask: &Mask) -> Result<()> {
    let bytes: Vec<u8> = mask.data().iter().map(|&v| (v >= 0.5) as u8).collect();
    write_bytes(path, &bytes)
}

/// Writes CSV rows produced by `rows` under `header`.
pub fn write_csv(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "{header}").expect("vec write");
    for r in rows {
        writeln!(buf, "{r}").expect("vec write");
    }
    write_bytes(path, &buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::litho::make_synthetic_kernels;

    #[test]
    fn kernel_round_trip() {
        let ks = make_synthetic_kernels(9, 3, 1.35).unwrap();
        let bytes = encode_kernels(&ks);
        assert_eq!(bytes.len(), 8 + 3 * 8 + 3 * 81 * 8);
        let back = decode_kernels(&bytes, "k").unwrap();
        assert_eq!(back.weights(), ks.weights());
        for k in 0..3 {
            assert_eq!(back.kernel(k), ks.kernel(k));
        }
        assert!(decode_kernels(&bytes[..bytes.len() - 1], "k").is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let m = Grid::from_fn(5, 3, |x, y| ((x + y) % 2) as f64);
        let b = encode_pgm(&m);
        assert!(b.starts_with(b"P5\n5 3\n255\n"));
        assert_eq!(decode_pgm(&b).unwrap(), m);
    }

    #[test]
    fn layout_json() {
        let l = Layout::new(64, 64, vec![Polygon::rect(10.0, 10.0, 30.0, 20.0).unwrap()]);
        let s = serde_json::to_string(&l).unwrap();
        assert!(!s.contains("srafs"));
        let back: Layout = serde_json::from_str(&s).unwrap();
        assert_eq!(back, l);
        assert!(serde_json::from_str::<Layout>(r#"{"width":8,"height":8,"polygons":[[[0,0],[1,1],[0,1]]]}"#).is_err());
    }

    #[test]
    fn geometry_round_trip() {
        let s = crate::geometry::segment_edges(&[Polygon::rect(10.0, 10.0, 200.0, 50.0).unwrap()], 80.0).unwrap();
        let g = GeometryFile::from_segments(&s, 256, 256);
        let back = g.to_segments().unwrap();
        assert_eq!(back.coords, s.coords);
        assert_eq!(back.velocities, s.velocities);
    }
}

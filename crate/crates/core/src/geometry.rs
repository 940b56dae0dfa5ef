//! Parallel-beam scan geometry and the sparse discrete Radon transform.
//!
//! Image pixel `(i, j)` (row `i`, column `j`) has its center at
//! `x = (j - (n-1)/2) * pixel_size`, `y = ((m-1)/2 - i) * pixel_size`, so row 0
//! is at the top. The projection line for angle `theta` and offset `s` is
//! `x cos(theta) + y sin(theta) = s`. Radial bins are centered at
//! `s = (b - (k-1)/2) * bin_spacing`.
//!
//! Matrix entries are exact line/pixel intersection lengths found by an
//! incremental (Siddon) traversal. Pixels are half-open cells `[x, x + d)` in
//! physical coordinates, so a line running exactly along a pixel edge is
//! assigned to a single neighbour and grazing (zero-length) hits are dropped.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, io_at, Error, Result};
use crate::grid::{column_major, from_column_major, ImageGrid, Sinogram};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanGeometry {
    /// m
    pub image_rows: usize,
    /// n
    pub image_cols: usize,
    pub pixel_size: f64,
    /// l
    pub num_angles: usize,
    /// k
    pub num_bins: usize,
    /// Degrees.
    pub angle_start: f64,
    /// Degrees.
    pub angle_step: f64,
    pub bin_spacing: f64,
}

impl Default for ScanGeometry {
    /// 175x175 image, 192 angles at 1 degree steps from 0, 192 unit bins.
    fn default() -> Self {
        Self {
            image_rows: 175,
            image_cols: 175,
            pixel_size: 1.0,
            num_angles: 192,
            num_bins: 192,
            angle_start: 0.0,
            angle_step: 1.0,
            bin_spacing: 1.0,
        }
    }
}

impl ScanGeometry {
    pub fn new(
        image_rows: usize,
        image_cols: usize,
        num_angles: usize,
        num_bins: usize,
        angle_step: f64,
    ) -> Result<Self> {
        let g = Self {
            image_rows,
            image_cols,
            num_angles,
            num_bins,
            angle_step,
            ..Self::default()
        };
        g.validate()?;
        Ok(g)
    }

    /// Half-resolution geometry (87x87 image, 96 angles at 2 degrees, 96 bins)
    /// for quick experiments.
    pub fn smoke() -> Self {
        Self {
            image_rows: 87,
            image_cols: 87,
            num_angles: 96,
            num_bins: 96,
            angle_step: 2.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.image_rows,
            self.image_cols,
            self.num_angles,
            self.num_bins,
        ];
        if dims.contains(&0) {
            return Err(Error::InvalidGeometry(format!(
                "all dimensions must be >= 1, got m={} n={} l={} k={}",
                self.image_rows, self.image_cols, self.num_angles, self.num_bins
            )));
        }
        if dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::InvalidGeometry("dimension exceeds u32".into()));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.pixel_size) || !positive(self.bin_spacing) {
            return Err(Error::InvalidGeometry(
                "pixel_size and bin_spacing must be positive".into(),
            ));
        }
        if !self.angle_start.is_finite() || !self.angle_step.is_finite() {
            return Err(Error::InvalidGeometry("angles must be finite".into()));
        }
        if self.num_angles > 1 && self.angle_step == 0.0 {
            return Err(Error::InvalidGeometry(
                "angle_step must be nonzero with more than one angle".into(),
            ));
        }
        Ok(())
    }

    pub fn image_shape(&self) -> (usize, usize) {
        (self.image_rows, self.image_cols)
    }

    /// `(num_bins, num_angles)`
    pub fn sinogram_shape(&self) -> (usize, usize) {
        (self.num_bins, self.num_angles)
    }

    /// Radius `r` such that bin coverage is `[-r, r]`.
    pub fn field_of_view_radius(&self) -> f64 {
        0.5 * self.num_bins as f64 * self.bin_spacing
    }

    pub fn angle_deg(&self, a: usize) -> f64 {
        self.angle_start + a as f64 * self.angle_step
    }

    pub fn bin_center(&self, b: usize) -> f64 {
        (b as f64 - 0.5 * (self.num_bins as f64 - 1.0)) * self.bin_spacing
    }

    /// Physical `(x, y)` of a pixel center.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        let d = self.pixel_size;
        (
            (col as f64 - 0.5 * (self.image_cols as f64 - 1.0)) * d,
            (0.5 * (self.image_rows as f64 - 1.0) - row as f64) * d,
        )
    }

    /// Sinogram row index of `(angle, bin)` in the column-major vectorisation.
    pub fn ray_index(&self, angle: usize, bin: usize) -> usize {
        angle * self.num_bins + bin
    }

    pub fn pixel_index(&self, row: usize, col: usize) -> usize {
        col * self.image_rows + row
    }
}

/// `(cos, sin)` of an angle in degrees, exact at multiples of 90.
pub(crate) fn cos_sin_deg(deg: f64) -> (f64, f64) {
    let quarter = deg / 90.0;
    if quarter == quarter.round() {
        match (quarter as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        let t = deg.to_radians();
        (t.cos(), t.sin())
    }
}

/// Sparse Radon matrix in compressed-row form. Rows are rays
/// ([`ScanGeometry::ray_index`]), columns are pixels
/// ([`ScanGeometry::pixel_index`]).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrix {
    geom: ScanGeometry,
    row_offsets: Vec<usize>,
    cols: Vec<u32>,
    values: Vec<f64>,
}

impl SystemMatrix {
    pub fn build(geom: &ScanGeometry) -> Result<Self> {
        geom.validate()?;
        let per_angle: Vec<(Vec<usize>, Vec<u32>, Vec<f64>)> = (0..geom.num_angles)
            .into_par_iter()
            .map(|a| {
                let (c, s) = cos_sin_deg(geom.angle_deg(a));
                let mut lens = Vec::with_capacity(geom.num_bins + 1);
                let mut cols = Vec::new();
                let mut vals = Vec::new();
                let mut tracer = RayTracer::new(geom);
                let mut row = Vec::new();
                for b in 0..geom.num_bins {
                    tracer.trace(c, s, geom.bin_center(b), &mut row);
                    lens.push(row.len());
                    for &(p, l) in &row {
                        cols.push(p);
                        vals.push(l);
                    }
                }
                (lens, cols, vals)
            })
            .collect();

        let nnz: usize = per_angle.iter().map(|(_, c, _)| c.len()).sum();
        let mut row_offsets = Vec::with_capacity(geom.num_angles * geom.num_bins + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_offsets.push(0);
        for (lens, c, v) in per_angle {
            for len in lens {
                row_offsets.push(row_offsets.last().unwrap() + len);
            }
            cols.extend(c);
            values.extend(v);
        }
        Ok(Self {
            geom: *geom,
            row_offsets,
            cols,
            values,
        })
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.geom
    }

    pub fn nrows(&self) -> usize {
        self.row_offsets.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.geom.image_rows * self.geom.image_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(pixel index, length)` pairs of one ray.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        self.cols[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    /// `y = R x` on column-major vectors.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols());
        assert_eq!(y.len(), self.nrows());
        y.par_iter_mut().enumerate().for_each(|(r, out)| {
            let span = self.row_offsets[r]..self.row_offsets[r + 1];
            let mut acc = 0.0;
            for (&c, &v) in self.cols[span.clone()].iter().zip(&self.values[span]) {
                acc += v * x[c as usize];
            }
            *out = acc;
        });
    }

    /// `x = R^T y` on column-major vectors. Serial scatter, so the result is
    /// independent of the thread count.
    pub fn apply_transpose(&self, y: &[f64], x: &mut [f64]) {
        assert_eq!(x.len(), self.ncols());
        assert_eq!(y.len(), self.nrows());
        x.fill(0.0);
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            let span = self.row_offsets[r]..self.row_offsets[r + 1];
            for (&c, &v) in self.cols[span.clone()].iter().zip(&self.values[span]) {
                x[c as usize] += v * yr;
            }
        }
    }

    pub fn forward_project(&self, u: &ImageGrid) -> Result<Sinogram> {
        check_shape(self.geom.image_shape(), u.shape())?;
        let mut y = vec![0.0; self.nrows()];
        self.apply(&column_major(&u.data), &mut y);
        Ok(Sinogram::wrap(
            from_column_major(self.geom.sinogram_shape(), y),
            &self.geom,
        ))
    }

    pub fn back_project(&self, v: &Sinogram) -> Result<ImageGrid> {
        check_shape(self.geom.sinogram_shape(), v.shape())?;
        let mut x = vec![0.0; self.ncols()];
        self.apply_transpose(&column_major(&v.data), &mut x);
        Ok(ImageGrid {
            data: from_column_major(self.geom.image_shape(), x),
            pixel_size: self.geom.pixel_size,
        })
    }
}

/// Incremental traversal of one line through the pixel grid.
struct RayTracer<'g> {
    geom: &'g ScanGeometry,
    x_min: f64,
    y_min: f64,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl<'g> RayTracer<'g> {
    fn new(geom: &'g ScanGeometry) -> Self {
        let d = geom.pixel_size;
        Self {
            geom,
            x_min: -0.5 * geom.image_cols as f64 * d,
            y_min: -0.5 * geom.image_rows as f64 * d,
            xs: Vec::new(),
            ys: Vec::new(),
        }
    }

    /// Parameter values where the line crosses grid lines `lo + i*d`,
    /// `i = 0..=count`, in increasing order, restricted to `(t0, t1)`.
    fn crossings(out: &mut Vec<f64>, origin: f64, dir: f64, lo: f64, d: f64, count: usize, t0: f64, t1: f64) {
        out.clear();
        if dir == 0.0 {
            return;
        }
        let push = |out: &mut Vec<f64>, i: usize| {
            let t = (lo + i as f64 * d - origin) / dir;
            if t > t0 && t < t1 {
                out.push(t);
            }
        };
        if dir > 0.0 {
            (0..=count).for_each(|i| push(out, i));
        } else {
            (0..=count).rev().for_each(|i| push(out, i));
        }
    }

    fn trace(&mut self, cos: f64, sin: f64, s: f64, row: &mut Vec<(u32, f64)>) {
        row.clear();
        let g = self.geom;
        let d = g.pixel_size;
        let (x_max, y_max) = (-self.x_min, -self.y_min);
        // point = origin + t * dir
        let (ox, oy) = (s * cos, s * sin);
        let (dx, dy) = (-sin, cos);

        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for (o, dir, lo, hi) in [(ox, dx, self.x_min, x_max), (oy, dy, self.y_min, y_max)] {
            if dir == 0.0 {
                if o < lo || o >= hi {
                    return;
                }
            } else {
                let (a, b) = ((lo - o) / dir, (hi - o) / dir);
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        if t1 <= t0 {
            return;
        }

        Self::crossings(&mut self.xs, ox, dx, self.x_min, d, g.image_cols, t0, t1);
        Self::crossings(&mut self.ys, oy, dy, self.y_min, d, g.image_rows, t0, t1);

        let eps = 1e-12 * d;
        let (mut i, mut j) = (0, 0);
        let mut prev = t0;
        loop {
            let next = match (self.xs.get(i), self.ys.get(j)) {
                (Some(&a), Some(&b)) if a <= b => {
                    i += 1;
                    a
                }
                (_, Some(&b)) => {
                    j += 1;
                    b
                }
                (Some(&a), None) => {
                    i += 1;
                    a
                }
                (None, None) => t1,
            };
            let len = next - prev;
            if len > eps {
                let tm = 0.5 * (prev + next);
                let col = ((ox + tm * dx - self.x_min) / d).floor();
                let q = ((oy + tm * dy - self.y_min) / d).floor();
                if col >= 0.0 && (col as usize) < g.image_cols && q >= 0.0 && (q as usize) < g.image_rows {
                    let r = g.image_rows - 1 - q as usize;
                    let p = g.pixel_index(r, col as usize) as u32;
                    match row.last_mut() {
                        Some((last, l)) if *last == p => *l += len,
                        _ => row.push((p, len)),
                    }
                }
                prev = next;
            }
            if next >= t1 {
                break;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// On-disk cache
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 4] = b"TOMO";
const VERSION: u32 = 1;

impl SystemMatrix {
    /// Writes the little-endian cache format: header
    /// `{"TOMO", version u32, m n k l u32, pixel_size angle_start angle_step
    /// bin_spacing f64, nnz u64}` then row offsets (u64), column indices (u32)
    /// and values (f64).
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path).map_err(io_at(path))?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let g = &self.geom;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        for d in [g.image_rows, g.image_cols, g.num_bins, g.num_angles] {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in [g.pixel_size, g.angle_start, g.angle_step, g.bin_spacing] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.nnz() as u64).to_le_bytes())?;
        for &o in &self.row_offsets {
            w.write_all(&(o as u64).to_le_bytes())?;
        }
        for &c in &self.cols {
            w.write_all(&c.to_le_bytes())?;
        }
        for &v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path).map_err(io_at(path))?))
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a TOMO matrix cache".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported cache version {version}")));
        }
        let m = read_u32(r)? as usize;
        let n = read_u32(r)? as usize;
        let k = read_u32(r)? as usize;
        let l = read_u32(r)? as usize;
        let geom = ScanGeometry {
            image_rows: m,
            image_cols: n,
            num_bins: k,
            num_angles: l,
            pixel_size: read_f64(r)?,
            angle_start: read_f64(r)?,
            angle_step: read_f64(r)?,
            bin_spacing: read_f64(r)?,
        };
        geom.validate()?;
        let nnz = read_u64(r)? as usize;
        let row_offsets = (0..=k * l)
            .map(|_| read_u64(r).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let cols = (0..nnz).map(|_| read_u32(r)).collect::<Result<Vec<_>>>()?;
        let values = (0..nnz).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;

        let offsets_ok = row_offsets.first() == Some(&0)
            && row_offsets.last() == Some(&nnz)
            && row_offsets.windows(2).all(|w| w[0] <= w[1]);
        if !offsets_ok || cols.iter().any(|&c| c as usize >= m * n) {
            return Err(Error::Format("corrupt CSR arrays".into()));
        }
        Ok(Self {
            geom,
            row_offsets,
            cols,
            values,
        })
    }

    /// Reads the cache at `path` if it matches `geom`, otherwise builds the
    /// matrix and (re)writes the cache.
    pub fn load_or_build(geom: &ScanGeometry, path: &Path) -> Result<Self> {
        if let Ok(cached) = Self::read_cache(path) {
            if cached.geom == *geom {
                return Ok(cached);
            }
        }
        let built = Self::build(geom)?;
        built.write_cache(path)?;
        Ok(built)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

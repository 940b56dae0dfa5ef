//! Image and sinogram containers.
//!
//! Both wrap an `Array2<f64>`. Vectorisation for the system matrix is
//! column-major: the columns of the array are appended left to right.

use std::borrow::Cow;

use ndarray::{Array2, ShapeBuilder};

use crate::error::{check_shape, Result};
use crate::geometry::ScanGeometry;

/// Activity map on an `rows x cols` pixel lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pub data: Array2<f64>,
    pub pixel_size: f64,
}

/// Line integrals indexed by `(bin, angle)`: one column per projection angle.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub data: Array2<f64>,
    pub bin_spacing: f64,
    pub angle_start: f64,
    pub angle_step: f64,
}

impl ImageGrid {
    pub fn zeros(geom: &ScanGeometry) -> Self {
        Self {
            data: Array2::zeros(geom.image_shape().f()),
            pixel_size: geom.pixel_size,
        }
    }

    pub fn from_array(data: Array2<f64>, geom: &ScanGeometry) -> Result<Self> {
        check_shape(geom.image_shape(), data.dim())?;
        Ok(Self {
            data,
            pixel_size: geom.pixel_size,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }
}

impl Sinogram {
    pub fn zeros(geom: &ScanGeometry) -> Self {
        Self::wrap(Array2::zeros(geom.sinogram_shape().f()), geom)
    }

    pub fn from_array(data: Array2<f64>, geom: &ScanGeometry) -> Result<Self> {
        check_shape(geom.sinogram_shape(), data.dim())?;
        Ok(Self::wrap(data, geom))
    }

    pub(crate) fn wrap(data: Array2<f64>, geom: &ScanGeometry) -> Self {
        Self {
            data,
            bin_spacing: geom.bin_spacing,
            angle_start: geom.angle_start,
            angle_step: geom.angle_step,
        }
    }

    /// Same sampling metadata, new values.
    pub(crate) fn with_data(&self, data: Array2<f64>) -> Self {
        Self {
            data,
            bin_spacing: self.bin_spacing,
            angle_start: self.angle_start,
            angle_step: self.angle_step,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn num_bins(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_angles(&self) -> usize {
        self.data.ncols()
    }

    /// Profile over the radial bins at one angle index.
    pub fn angle_profile(&self, angle: usize) -> Vec<f64> {
        self.data.column(angle).to_vec()
    }
}

/// Column-major view of a 2-D array, borrowing when the memory layout allows.
pub fn column_major(a: &Array2<f64>) -> Cow<'_, [f64]> {
    let t = a.t();
    match t.to_slice() {
        Some(s) => Cow::Borrowed(s),
        None => Cow::Owned(t.iter().copied().collect()),
    }
}

/// Inverse of [`column_major`].
pub fn from_column_major(shape: (usize, usize), data: Vec<f64>) -> Array2<f64> {
    Array2::from_shape_vec(shape.f(), data).expect("length matches shape")
}

pub(crate) fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

//! Forward-difference gradient, its negative adjoint, and total variation.

use ndarray::{Array2, Zip};

use crate::error::{check_shape, Result};

/// Pair of arrays holding horizontal (`c1`) and vertical (`c2`) differences.
///
/// The last column of `c1` and the last row of `c2` are zero for any field
/// produced by [`gradient`].
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField2 {
    pub c1: Array2<f64>,
    pub c2: Array2<f64>,
}

impl VectorField2 {
    pub fn zeros(shape: (usize, usize)) -> Self {
        Self {
            c1: Array2::zeros(shape),
            c2: Array2::zeros(shape),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.c1.dim()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        crate::grid::dot(&self.c1, &other.c1) + crate::grid::dot(&self.c2, &other.c2)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            c1: &self.c1 + &other.c1,
            c2: &self.c2 + &other.c2,
        }
    }

    /// `self - other`
    pub fn sub(&self, other: &Self) -> Self {
        Self {
            c1: &self.c1 - &other.c1,
            c2: &self.c2 - &other.c2,
        }
    }

    /// `self += x - y`
    pub(crate) fn add_diff(&mut self, x: &Self, y: &Self) {
        Zip::from(&mut self.c1)
            .and(&x.c1)
            .and(&y.c1)
            .for_each(|s, &a, &b| *s += a - b);
        Zip::from(&mut self.c2)
            .and(&x.c2)
            .and(&y.c2)
            .for_each(|s, &a, &b| *s += a - b);
    }
}

/// Forward differences with zero at the trailing boundary.
pub fn gradient(f: &Array2<f64>) -> VectorField2 {
    let mut g = VectorField2::zeros(f.dim());
    gradient_into(f, &mut g);
    g
}

pub(crate) fn gradient_into(f: &Array2<f64>, g: &mut VectorField2) {
    let (rows, cols) = f.dim();
    for i in 0..rows {
        for j in 0..cols {
            let here = f[[i, j]];
            g.c1[[i, j]] = if j + 1 < cols { f[[i, j + 1]] - here } else { 0.0 };
            g.c2[[i, j]] = if i + 1 < rows { f[[i + 1, j]] - here } else { 0.0 };
        }
    }
}

/// Discrete divergence, defined by `<div z, u> = -<z, grad u>`.
pub fn divergence(z: &VectorField2) -> Result<Array2<f64>> {
    check_shape(z.c1.dim(), z.c2.dim())?;
    let mut out = Array2::zeros(z.shape());
    divergence_into(z, &mut out);
    Ok(out)
}

pub(crate) fn divergence_into(z: &VectorField2, out: &mut Array2<f64>) {
    let (rows, cols) = z.shape();
    for i in 0..rows {
        for j in 0..cols {
            let d1 = if cols == 1 {
                0.0
            } else if j == 0 {
                z.c1[[i, j]]
            } else if j + 1 == cols {
                -z.c1[[i, j - 1]]
            } else {
                z.c1[[i, j]] - z.c1[[i, j - 1]]
            };
            let d2 = if rows == 1 {
                0.0
            } else if i == 0 {
                z.c2[[i, j]]
            } else if i + 1 == rows {
                -z.c2[[i - 1, j]]
            } else {
                z.c2[[i, j]] - z.c2[[i - 1, j]]
            };
            out[[i, j]] = d1 + d2;
        }
    }
}

/// `div(grad f)` without materialising the gradient.
pub(crate) fn laplacian_into(f: &Array2<f64>, out: &mut Array2<f64>) {
    let (rows, cols) = f.dim();
    for i in 0..rows {
        for j in 0..cols {
            let c = f[[i, j]];
            let mut acc = 0.0;
            if j > 0 {
                acc += f[[i, j - 1]] - c;
            }
            if j + 1 < cols {
                acc += f[[i, j + 1]] - c;
            }
            if i > 0 {
                acc += f[[i - 1, j]] - c;
            }
            if i + 1 < rows {
                acc += f[[i + 1, j]] - c;
            }
            out[[i, j]] = acc;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Anisotropy {
    #[default]
    Isotropic,
    Anisotropic,
}

pub fn tv_seminorm(f: &Array2<f64>, anisotropy: Anisotropy) -> f64 {
    let g = gradient(f);
    match anisotropy {
        Anisotropy::Isotropic => Zip::from(&g.c1)
            .and(&g.c2)
            .fold(0.0, |acc, &a, &b| acc + a.hypot(b)),
        Anisotropy::Anisotropic => Zip::from(&g.c1)
            .and(&g.c2)
            .fold(0.0, |acc, &a, &b| acc + a.abs() + b.abs()),
    }
}

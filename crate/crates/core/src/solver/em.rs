use ndarray::{Array2, Zip};

use super::joint::{back_project, project};
use crate::error::{check_shape, Error, Result};
use crate::geometry::SystemMatrix;
use crate::grid::{ImageGrid, Sinogram};

#[derive(Debug, Clone)]
pub struct EmResult {
    pub image: ImageGrid,
    /// `sum(g log Ru - Ru)` before the first and after every iteration.
    pub log_likelihood: Vec<f64>,
}

/// Poisson log-likelihood up to a constant, with `Ru` floored at `eps`.
pub fn poisson_log_likelihood(g: &Array2<f64>, ru: &Array2<f64>, eps: f64) -> f64 {
    Zip::from(g).and(ru).fold(0.0, |acc, &g, &p| {
        let p = p.max(eps);
        acc + if g > 0.0 { g * p.ln() } else { 0.0 } - p
    })
}

/// Multiplicative EM: `u <- u / (R'1) * R'(g / Ru)`. Starts from `u0`, or from
/// ones when `None`. Pixels no ray touches are set to zero.
pub fn em_reconstruct(
    g: &Sinogram,
    r: &SystemMatrix,
    iters: usize,
    u0: Option<&ImageGrid>,
) -> Result<EmResult> {
    let geom = r.geometry();
    check_shape(geom.sinogram_shape(), g.shape())?;
    if let Some(bad) = g.data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "sinogram entries must be finite and nonnegative, found {bad}"
        )));
    }
    let mut u = match u0 {
        Some(u0) => {
            check_shape(geom.image_shape(), u0.shape())?;
            if u0.data.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::InvalidArgument("EM start image must be strictly positive".into()));
            }
            u0.data.clone()
        }
        None => Array2::ones(geom.image_shape()),
    };
    let sensitivity = back_project(r, &Array2::ones(geom.sinogram_shape()));
    let eps = f64::EPSILON * g.data.iter().fold(f64::MIN_POSITIVE, |m, &v| m.max(v));

    let mut ru = project(r, &u);
    let mut log_likelihood = vec![poisson_log_likelihood(&g.data, &ru, eps)];
    for _ in 0..iters {
        let mut ratio = Array2::zeros(g.data.raw_dim());
        Zip::from(&mut ratio)
            .and(&g.data)
            .and(&ru)
            .for_each(|q, &g, &p| *q = g / p.max(eps));
        let correction = back_project(r, &ratio);
        Zip::from(&mut u)
            .and(&sensitivity)
            .and(&correction)
            .for_each(|u, &s, &c| *u = if s > 0.0 { *u * c / s } else { 0.0 });
        ru = project(r, &u);
        log_likelihood.push(poisson_log_likelihood(&g.data, &ru, eps));
    }
    Ok(EmResult {
        image: ImageGrid {
            data: u,
            pixel_size: geom.pixel_size,
        },
        log_likelihood,
    })
}

//! Split Bregman solvers for the joint image/sinogram TV model and for
//! sinogram-only weighted ROF denoising, plus an EM baseline.
//!
//! The joint model minimises
//! `alpha TV(u) + beta TV(Ru) + 1/2 sum (g - Ru)^2 / g` over images `u >= 0`,
//! with isotropic TV in both spaces.

mod cg;
mod em;
mod joint;
mod rof;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

pub use cg::{cg_solve, pcg_solve, CgReport};
pub use em::{em_reconstruct, poisson_log_likelihood, EmResult};
pub use joint::{reconstruct_joint, reconstruct_joint_with, JointResult, JointSolver, SolverState};
pub use rof::{sinogram_rof, RofConfig, RofResult};

use crate::error::{check_shape, Error, Result};
use crate::geometry::SystemMatrix;
use crate::grid::{ImageGrid, Sinogram};
use crate::operators::{tv_seminorm, Anisotropy, VectorField2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub outer_max_iters: usize,
    pub outer_rel_tol: f64,
    pub cg_max_iters: usize,
    pub cg_rel_tol: f64,
    /// Fidelity weights use `max(g, g_floor * max(g))`.
    pub g_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 6.0,
            beta: 0.0,
            lambda1: 0.001,
            lambda2: 1.0,
            lambda3: 100.0,
            lambda4: 100.0,
            outer_max_iters: 400,
            outer_rel_tol: 1e-4,
            cg_max_iters: 200,
            cg_rel_tol: 1e-3,
            g_floor: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn with_weights(alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("solver config: {what}")));
        if !(self.alpha >= 0.0 && self.alpha.is_finite() && self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("alpha and beta must be finite and nonnegative");
        }
        let lambdas = [self.lambda1, self.lambda2, self.lambda3, self.lambda4];
        if !lambdas.iter().all(|l| *l > 0.0 && l.is_finite()) {
            return bad("lambda1..lambda4 must be positive");
        }
        if !(self.outer_rel_tol >= 0.0 && self.cg_rel_tol >= 0.0) {
            return bad("tolerances must be nonnegative");
        }
        if !(self.g_floor > 0.0 && self.g_floor < 1.0) {
            return bad("g_floor must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Per-iteration record of the joint solver, in the units of the input data.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Diagnostics {
    pub iter: usize,
    /// Objective evaluated at the nonnegative iterate `u_tilde`.
    pub energy: f64,
    /// `||Ru - v||`, `||grad v - w||`, `||grad u - z||`, `||u - u_tilde||`.
    pub residuals: [f64; 4],
    pub rel_change: f64,
    pub cg_iters_v: usize,
    pub cg_iters_u: usize,
    pub cg_converged: bool,
}

impl Diagnostics {
    pub const CSV_HEADER: &'static str =
        "iter,energy,res_radon,res_grad_v,res_grad_u,res_positivity,rel_change,cg_iters_v,cg_iters_u";

    pub fn csv_row(&self) -> String {
        let [a, b, c, d] = self.residuals;
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{},{}",
            self.iter, self.energy, a, b, c, d, self.rel_change, self.cg_iters_v, self.cg_iters_u
        )
    }
}

/// `max(g, floor * max(g))`.
pub(crate) fn floored_weights(g: &Array2<f64>, floor: f64) -> Array2<f64> {
    let max = g.iter().fold(0.0f64, |m, &v| m.max(v));
    let f = floor * max;
    g.mapv(|v| v.max(f))
}

/// Joint objective `alpha TV(u) + beta TV(Ru) + 1/2 sum (g - Ru)^2 / g`.
pub fn energy(u: &ImageGrid, g: &Sinogram, cfg: &SolverConfig, r: &SystemMatrix) -> Result<f64> {
    let ru = r.forward_project(u)?;
    check_shape(ru.shape(), g.shape())?;
    Ok(energy_parts(&u.data, &ru.data, &g.data, &floored_weights(&g.data, cfg.g_floor), cfg))
}

pub(crate) fn energy_parts(
    u: &Array2<f64>,
    ru: &Array2<f64>,
    g: &Array2<f64>,
    weights: &Array2<f64>,
    cfg: &SolverConfig,
) -> f64 {
    let fidelity = Zip::from(ru)
        .and(g)
        .and(weights)
        .fold(0.0, |acc, &p, &g, &w| acc + (g - p) * (g - p) / w);
    cfg.alpha * tv_seminorm(u, Anisotropy::Isotropic)
        + cfg.beta * tv_seminorm(ru, Anisotropy::Isotropic)
        + 0.5 * fidelity
}

/// `max(b4 + u, 0)` elementwise.
pub fn positivity_project(u: &ImageGrid, b4: &ImageGrid) -> Result<ImageGrid> {
    check_shape(u.shape(), b4.shape())?;
    Ok(ImageGrid {
        data: project_nonnegative(&u.data, &b4.data),
        pixel_size: u.pixel_size,
    })
}

pub(crate) fn project_nonnegative(u: &Array2<f64>, b4: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(u.raw_dim());
    Zip::from(&mut out)
        .and(u)
        .and(b4)
        .for_each(|o, &u, &b| *o = (u + b).max(0.0));
    out
}

/// Isotropic soft shrinkage: each pixel's vector `x_p` becomes
/// `max(|x_p| - t, 0) x_p / |x_p|`.
pub fn soft_shrink(x: &VectorField2, threshold: f64) -> Result<VectorField2> {
    check_shape(x.c1.dim(), x.c2.dim())?;
    if !(threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "shrink threshold must be nonnegative, got {threshold}"
        )));
    }
    let mut out = VectorField2::zeros(x.shape());
    shrink_into(x, threshold, &mut out);
    Ok(out)
}

pub(crate) fn shrink_into(x: &VectorField2, threshold: f64, out: &mut VectorField2) {
    Zip::from(&mut out.c1)
        .and(&mut out.c2)
        .and(&x.c1)
        .and(&x.c2)
        .for_each(|o1, o2, &a, &b| {
            let mag = a.hypot(b);
            let keep = if mag > threshold { (mag - threshold) / mag } else { 0.0 };
            *o1 = keep * a;
            *o2 = keep * b;
        });
}

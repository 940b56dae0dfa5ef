use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::cg::cg_solve;
use super::{floored_weights, shrink_into};
use crate::error::{Error, Result};
use crate::grid::{norm, Sinogram};
use crate::operators::{divergence_into, gradient_into, laplacian_into, VectorField2};

/// Settings for [`sinogram_rof`], which minimises
/// `beta TV(v) + 1/2 sum (g - v)^2 / g` over `v >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RofConfig {
    pub beta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub max_iters: usize,
    /// Stop once `||v~_new - v~_old|| / ||g||` falls below this.
    pub rel_tol: f64,
    pub cg_max_iters: usize,
    pub cg_rel_tol: f64,
    pub g_floor: f64,
}

impl Default for RofConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            lambda1: 1.0,
            lambda2: 1.0,
            max_iters: 5000,
            rel_tol: 1e-6,
            cg_max_iters: 200,
            cg_rel_tol: 1e-8,
            g_floor: 1e-6,
        }
    }
}

impl RofConfig {
    pub fn with_beta(beta: f64) -> Self {
        Self {
            beta,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct RofResult {
    pub sinogram: Sinogram,
    pub iterations: usize,
    pub converged: bool,
    pub rel_change: f64,
}

/// Split Bregman for weighted ROF denoising of a sinogram, with splittings
/// `w = grad v` (weight `lambda1`) and `v~ = v` (weight `lambda2`). Returns `v~`.
pub fn sinogram_rof(g: &Sinogram, cfg: &RofConfig) -> Result<RofResult> {
    if !(cfg.beta >= 0.0 && cfg.beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("beta must be nonnegative, got {}", cfg.beta)));
    }
    if !(cfg.lambda1 > 0.0 && cfg.lambda2 > 0.0) {
        return Err(Error::InvalidArgument("lambda1 and lambda2 must be positive".into()));
    }
    if let Some(bad) = g.data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "sinogram entries must be finite and nonnegative, found {bad}"
        )));
    }
    if g.data.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidArgument("sinogram is identically zero".into()));
    }

    let (l1, l2) = (cfg.lambda1, cfg.lambda2);
    let shape = g.shape();
    let weights = floored_weights(&g.data, cfg.g_floor);
    let g_norm = norm(&g.data);
    let mut v = g.data.clone();
    let mut v_tilde = g.data.clone();
    let mut w = VectorField2::zeros(shape);
    let mut b1 = VectorField2::zeros(shape);
    let mut b2 = Array2::<f64>::zeros(shape);
    let mut grad_v = VectorField2::zeros(shape);
    let mut rhs = Array2::zeros(shape);

    let apply = |x: &Array2<f64>, out: &mut Array2<f64>| {
        laplacian_into(x, out);
        Zip::from(out).and(x).for_each(|o, &x| *o = l2 * x - l1 * *o);
    };

    let mut rel_change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;

        // v: (lambda2 - lambda1 lap) v = lambda1 div(b1 - w) + lambda2 (v~ - b2)
        divergence_into(&b1.sub(&w), &mut rhs);
        Zip::from(&mut rhs)
            .and(&v_tilde)
            .and(&b2)
            .for_each(|o, &t, &b| *o = l1 * *o + l2 * (t - b));
        let (next, _) = cg_solve(apply, &rhs, v, cfg.cg_max_iters, cfg.cg_rel_tol);
        v = next;

        // v~: pointwise minimiser of (g - t)^2 / 2g + lambda2/2 (b2 + v - t)^2, clipped at 0
        let mut next_tilde = Array2::zeros(shape);
        Zip::from(&mut next_tilde)
            .and(&g.data)
            .and(&weights)
            .and(&b2)
            .and(&v)
            .for_each(|t, &g, &q, &b, &v| *t = ((g + l2 * q * (b + v)) / (1.0 + l2 * q)).max(0.0));

        gradient_into(&v, &mut grad_v);
        shrink_into(&b1.add(&grad_v), cfg.beta / l1, &mut w);

        b1.add_diff(&grad_v, &w);
        Zip::from(&mut b2)
            .and(&v)
            .and(&next_tilde)
            .for_each(|b, &v, &t| *b += v - t);

        rel_change = norm(&(&next_tilde - &v_tilde)) / g_norm;
        v_tilde = next_tilde;
        if rel_change < cfg.rel_tol {
            break;
        }
    }

    Ok(RofResult {
        sinogram: g.with_data(v_tilde),
        iterations,
        converged: rel_change < cfg.rel_tol,
        rel_change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ScanGeometry;
    use crate::phantoms::analytic_disc_sinogram;

    #[test]
    fn zero_beta_returns_the_data() {
        let g = ScanGeometry::new(8, 8, 6, 10, 30.0).unwrap();
        let s = analytic_disc_sinogram(3.2, &g).unwrap();
        let cfg = RofConfig {
            max_iters: 20_000,
            rel_tol: 1e-11,
            ..RofConfig::with_beta(0.0)
        };
        let out = sinogram_rof(&s, &cfg).unwrap();
        assert!(out.converged);
        for (a, b) in out.sinogram.data.iter().zip(s.data.iter()) {
            assert!((a - b).abs() < 1e-6 * (1.0 + b));
        }
    }

    #[test]
    fn huge_beta_gives_weighted_mean() {
        // the constant c minimising sum (g - c)^2 / g is n / sum(1/g)
        let g = ScanGeometry::new(8, 8, 5, 4, 45.0).unwrap();
        let mut s = Sinogram::zeros(&g);
        for ((b, a), x) in s.data.indexed_iter_mut() {
            *x = 1.0 + (b + 2 * a) as f64 * 0.25;
        }
        let n = s.data.len() as f64;
        let harmonic = n / s.data.iter().map(|x| 1.0 / x).sum::<f64>();
        let cfg = RofConfig {
            max_iters: 20_000,
            rel_tol: 1e-12,
            ..RofConfig::with_beta(1e6)
        };
        let out = sinogram_rof(&s, &cfg).unwrap();
        for &x in out.sinogram.data.iter() {
            assert!((x - harmonic).abs() < 1e-4 * harmonic, "{x} vs {harmonic}");
        }
    }

    #[test]
    fn output_is_nonnegative_and_rejects_bad_input() {
        let g = ScanGeometry::new(8, 8, 6, 10, 30.0).unwrap();
        let s = analytic_disc_sinogram(3.2, &g).unwrap();
        let out = sinogram_rof(&s, &RofConfig::with_beta(2.0)).unwrap();
        assert!(out.sinogram.data.iter().all(|&v| v >= 0.0));
        assert!(sinogram_rof(&Sinogram::zeros(&g), &RofConfig::default()).is_err());
        assert!(sinogram_rof(&s, &RofConfig::with_beta(-1.0)).is_err());
    }
}

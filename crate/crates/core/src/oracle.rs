//! Closed-form weighted ROF solution for the sinogram of a centered disc.
//!
//! For `g(s) = 2 sqrt(r^2 - s^2)` the minimiser of
//! `beta TV(v) + 1/2 int (g - v)^2 / g` is flat, `v = delta = g(kappa)`, on
//! `|s| <= kappa` and equals `g` elsewhere. `kappa` minimises the 1-D
//! function [`oracle_objective`].

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::ScanGeometry;
use crate::grid::Sinogram;
use crate::phantoms::disc_chord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    pub r: f64,
    pub beta: f64,
    pub kappa: f64,
    pub delta: f64,
    pub objective_value: f64,
    /// False when a coarse grid scan found a better point than the search.
    pub grid_agrees: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaSearch {
    /// Golden-section search down to the given bracket width.
    Golden { tol: f64 },
    /// Brent's bounded minimiser on `[0, r]` with the termination rule of
    /// MATLAB's `fminbnd` (`TolX` absolute tolerance).
    Fminbnd { tol_x: f64 },
}

fn objective(kappa: f64, r: f64, beta: f64) -> f64 {
    let q = (r * r - kappa * kappa).max(0.0).sqrt();
    let ratio = (kappa / r).clamp(-1.0, 1.0);
    (4.0 * beta - 3.0 * kappa) * q + (3.0 * r * r - 2.0 * kappa * kappa) * ratio.asin()
}

/// `(4 beta - 3 kappa) sqrt(r^2 - kappa^2) + (3 r^2 - 2 kappa^2) asin(kappa / r)`.
pub fn oracle_objective(kappa: f64, r: f64, beta: f64) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {r}")));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("beta must be nonnegative, got {beta}")));
    }
    if !(0.0..r).contains(&kappa) {
        return Err(Error::InvalidArgument(format!("kappa must lie in [0, {r}), got {kappa}")));
    }
    Ok(objective(kappa, r, beta))
}

/// Golden-section search with bracket width `tol` on `[0, r (1 - 1e-12)]`.
pub fn solve_kappa(r: f64, beta: f64, tol: Option<f64>) -> Result<OracleResult> {
    solve_kappa_with(r, beta, KappaSearch::Golden {
        tol: tol.unwrap_or(1e-10 * r),
    })
}

pub fn solve_kappa_with(r: f64, beta: f64, search: KappaSearch) -> Result<OracleResult> {
    oracle_objective(0.0, r, beta)?;
    let f = |k: f64| objective(k, r, beta);
    let hi = r * (1.0 - 1e-12);
    let kappa = match search {
        KappaSearch::Golden { tol } => {
            if !(tol > 0.0) {
                return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
            }
            golden_section(f, 0.0, hi, tol)
        }
        KappaSearch::Fminbnd { tol_x } => {
            if !(tol_x > 0.0) {
                return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol_x}")));
            }
            fminbnd(f, 0.0, r, tol_x, 500).min(hi)
        }
    };
    let value = f(kappa);

    let samples = 1000;
    let grid_best = (0..=samples)
        .map(|i| f(hi * i as f64 / samples as f64))
        .fold(f64::INFINITY, f64::min);
    let slack = 1e-9 * value.abs().max(r * r);
    Ok(OracleResult {
        r,
        beta,
        kappa,
        delta: 2.0 * (r * r - kappa * kappa).sqrt(),
        objective_value: value,
        grid_agrees: value <= grid_best + slack,
    })
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    [a, mid, b]
        .into_iter()
        .min_by(|x, y| f(*x).total_cmp(&f(*y)))
        .expect("three candidates")
}

/// Brent's bounded scalar minimiser (golden section plus parabolic steps).
pub(crate) fn fminbnd(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol_x: f64, max_evals: usize) -> f64 {
    let sqrt_eps = f64::EPSILON.sqrt();
    let golden = 0.5 * (3.0 - 5f64.sqrt());
    let (mut a, mut b) = (lo, hi);
    let mut fulc = a + golden * (b - a);
    let mut nfc = fulc;
    let mut xf = fulc;
    let (mut rat, mut e) = (0.0f64, 0.0f64);
    let mut fx = f(xf);
    let mut evals = 1;
    let mut ffulc = fx;
    let mut fnfc = fx;
    let mut xm = 0.5 * (a + b);
    let mut tol1 = sqrt_eps * xf.abs() + tol_x / 3.0;
    let mut tol2 = 2.0 * tol1;

    while (xf - xm).abs() > tol2 - 0.5 * (b - a) {
        let mut take_golden = true;
        if e.abs() > tol1 {
            take_golden = false;
            let mut r = (xf - nfc) * (fx - ffulc);
            let mut q = (xf - fulc) * (fx - fnfc);
            let mut p = (xf - fulc) * q - (xf - nfc) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            r = e;
            e = rat;
            if p.abs() < (0.5 * q * r).abs() && p > q * (a - xf) && p < q * (b - xf) {
                rat = p / q;
                let x = xf + rat;
                if x - a < tol2 || b - x < tol2 {
                    let si = if xm - xf >= 0.0 { 1.0 } else { -1.0 };
                    rat = tol1 * si;
                }
            } else {
                take_golden = true;
            }
        }
        if take_golden {
            e = if xf >= xm { a - xf } else { b - xf };
            rat = golden * e;
        }
        let si = if rat >= 0.0 { 1.0 } else { -1.0 };
        let x = xf + si * rat.abs().max(tol1);
        let fu = f(x);
        evals += 1;
        if fu <= fx {
            if x >= xf {
                a = xf;
            } else {
                b = xf;
            }
            fulc = nfc;
            ffulc = fnfc;
            nfc = xf;
            fnfc = fx;
            xf = x;
            fx = fu;
        } else {
            if x < xf {
                a = x;
            } else {
                b = x;
            }
            if fu <= fnfc || nfc == xf {
                fulc = nfc;
                ffulc = fnfc;
                nfc = x;
                fnfc = fu;
            } else if fu <= ffulc || fulc == xf || fulc == nfc {
                fulc = x;
                ffulc = fu;
            }
        }
        xm = 0.5 * (a + b);
        tol1 = sqrt_eps * xf.abs() + tol_x / 3.0;
        tol2 = 2.0 * tol1;
        if evals >= max_evals {
            break;
        }
    }
    xf
}

/// The flat-topped minimiser sampled on the scanner's bins, same for every angle.
pub fn candidate_sinogram(res: &OracleResult, geom: &ScanGeometry) -> Sinogram {
    let mut g = Sinogram::zeros(geom);
    for b in 0..geom.num_bins {
        let s = geom.bin_center(b);
        let value = if s.abs() <= res.kappa {
            res.delta
        } else {
            disc_chord(res.r, s)
        };
        g.data.row_mut(b).fill(value);
    }
    g
}

/// Inverse Abel transform of the flat part: `delta / (pi sqrt(r^2 - r~^2))`
/// for `|r~| <= kappa`.
pub fn abel_image_profile(res: &OracleResult, r_tilde: f64) -> Result<f64> {
    if !(r_tilde.abs() <= res.kappa) {
        return Err(Error::InvalidArgument(format!(
            "|r~| = {} lies outside the flat part |r~| <= {}",
            r_tilde.abs(),
            res.kappa
        )));
    }
    Ok(res.delta / (PI * (res.r * res.r - r_tilde * r_tilde).sqrt()))
}

/// Height of a regularised disc sinogram: its largest entry. On a flat top
/// this is the plateau value, and for tiny `beta` the peak.
pub fn flat_top_value(v: &Sinogram) -> f64 {
    v.data.iter().fold(0.0, |m, &x| m.max(x))
}

/// Reference disc radii, each with its seven betas.
pub const DISC_GRID: [(f64, [f64; 7]); 3] = [
    (15.5, [1e-3, 0.1, 1.0, 5.0, 10.0, 15.0, 15.5]),
    (30.5, [1e-3, 1.0, 10.0, 15.0, 20.0, 25.0, 30.5]),
    (50.5, [1e-3, 1.0, 10.0, 20.0, 30.0, 45.0, 50.5]),
];

//! Filtered back-projection with the Ram-Lak (ramp) filter.

use std::f64::consts::PI;

use ndarray::{Array2, ShapeBuilder};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{check_shape, Result};
use crate::geometry::{cos_sin_deg, ScanGeometry};
use crate::grid::{ImageGrid, Sinogram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    Nearest,
    #[default]
    Linear,
}

/// Ramp filter response for `len` FFT bins, taken as the DFT of the
/// band-limited spatial Ram-Lak kernel (`1/(4d^2)` at 0, `-1/(pi n d)^2` at odd
/// `n`). This keeps the DC term consistent with a linear (not circular)
/// convolution.
fn ramp_response(len: usize, spacing: f64) -> Vec<f64> {
    let mut kernel = vec![Complex::new(0.0, 0.0); len];
    kernel[0].re = 1.0 / (4.0 * spacing * spacing);
    for n in 1..len / 2 {
        if n % 2 == 1 {
            let v = -1.0 / (PI * n as f64 * spacing).powi(2);
            kernel[n].re = v;
            kernel[len - n].re = v;
        }
    }
    if len >= 2 && (len / 2) % 2 == 1 {
        kernel[len / 2].re = -1.0 / (PI * (len / 2) as f64 * spacing).powi(2);
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut kernel);
    // Times the sample spacing to turn the discrete convolution into an integral.
    kernel.iter().map(|c| c.re * spacing).collect()
}

/// Ramp-filters every angle's radial profile.
pub fn ramp_filter(v: &Sinogram) -> Array2<f64> {
    let (bins, angles) = v.shape();
    let len = (2 * bins).next_power_of_two();
    let response = ramp_response(len, v.bin_spacing);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);

    let columns: Vec<Vec<f64>> = (0..angles)
        .into_par_iter()
        .map(|a| {
            let mut buf: Vec<Complex<f64>> = (0..len)
                .map(|b| Complex::new(if b < bins { v.data[[b, a]] } else { 0.0 }, 0.0))
                .collect();
            fwd.process(&mut buf);
            for (c, &h) in buf.iter_mut().zip(&response) {
                *c *= h / len as f64;
            }
            inv.process(&mut buf);
            buf[..bins].iter().map(|c| c.re).collect()
        })
        .collect();

    let mut out = Array2::zeros((bins, angles).f());
    for (a, col) in columns.into_iter().enumerate() {
        for (b, x) in col.into_iter().enumerate() {
            out[[b, a]] = x;
        }
    }
    out
}

/// Quadrature weights for the angles folded into `[0, 180)` degrees: each
/// distinct direction gets half the arc to its two neighbours, shared among
/// the angles that land on it. An even half-turn scan gives `pi / num_angles`
/// everywhere; views repeated by a scan longer than 180 degrees share a weight.
pub fn angle_weights(geom: &ScanGeometry) -> Vec<f64> {
    let n = geom.num_angles;
    let folded: Vec<f64> = (0..n).map(|a| geom.angle_deg(a).rem_euclid(180.0)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| folded[a].total_cmp(&folded[b]));
    let same = |a: f64, b: f64| (a - b).abs() < 1e-9 * 180.0;

    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for idx in order {
        match groups.last_mut() {
            Some((theta, members)) if same(*theta, folded[idx]) => members.push(idx),
            _ => groups.push((folded[idx], vec![idx])),
        }
    }
    if groups.len() > 1 && same(groups[0].0 + 180.0, groups[groups.len() - 1].0) {
        let (_, wrapped) = groups.pop().unwrap();
        groups[0].1.extend(wrapped);
    }

    let mut weights = vec![0.0; n];
    let count = groups.len();
    for (i, (theta, members)) in groups.iter().enumerate() {
        let arc = if count == 1 {
            180.0
        } else {
            let prev = groups[(i + count - 1) % count].0;
            let next = groups[(i + 1) % count].0;
            0.5 * ((theta - prev).rem_euclid(180.0) + (next - theta).rem_euclid(180.0))
        };
        for &m in members {
            weights[m] = arc.to_radians() / members.len() as f64;
        }
    }
    weights
}

/// Filtered back-projection with the weights of [`angle_weights`].
pub fn fbp(v: &Sinogram, geom: &ScanGeometry, interpolation: Interpolation) -> Result<ImageGrid> {
    check_shape(geom.sinogram_shape(), v.shape())?;
    let filtered = ramp_filter(v);
    let (rows, cols) = geom.image_shape();
    let bins = geom.num_bins;
    let weights = angle_weights(geom);
    let center = 0.5 * (bins as f64 - 1.0);
    let trig: Vec<(f64, f64)> = (0..geom.num_angles)
        .map(|a| cos_sin_deg(geom.angle_deg(a)))
        .collect();

    let sample = |a: usize, pos: f64| -> f64 {
        match interpolation {
            Interpolation::Nearest => {
                let b = pos.round();
                if b >= 0.0 && (b as usize) < bins {
                    filtered[[b as usize, a]]
                } else {
                    0.0
                }
            }
            Interpolation::Linear => {
                let b0 = pos.floor();
                let t = pos - b0;
                let at = |b: f64| {
                    if b >= 0.0 && (b as usize) < bins {
                        filtered[[b as usize, a]]
                    } else {
                        0.0
                    }
                };
                (1.0 - t) * at(b0) + t * at(b0 + 1.0)
            }
        }
    };

    let pixels: Vec<f64> = (0..rows * cols)
        .into_par_iter()
        .map(|p| {
            let (col, row) = (p / rows, p % rows);
            let (x, y) = geom.pixel_center(row, col);
            trig.iter()
                .enumerate()
                .map(|(a, &(c, s))| weights[a] * sample(a, (x * c + y * s) / geom.bin_spacing + center))
                .sum::<f64>()
        })
        .collect();

    Ok(ImageGrid {
        data: crate::grid::from_column_major((rows, cols), pixels),
        pixel_size: geom.pixel_size,
    })
}

//! Seeded Poisson corruption of sinograms.
//!
//! Each sinogram entry `g` becomes `s * Poisson(g / s)` with
//! `s = max(g) / mean_counts_at_max`. Samples come from ChaCha8 with one
//! stream per entry (stream id = column-major index), so the result depends
//! only on the seed and not on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{column_major, from_column_major, Sinogram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum NoisePreset {
    #[default]
    None,
    Low,
    High,
}

impl NoisePreset {
    /// Mean counts in the hottest sinogram bin. Calibrated on the default
    /// two-discs sinogram to an expected SNR of about 18.5 dB (low) and
    /// 8.7 dB (high).
    pub fn mean_counts_at_max(self) -> Option<f64> {
        match self {
            NoisePreset::None => None,
            NoisePreset::Low => Some(LOW_COUNTS),
            NoisePreset::High => Some(HIGH_COUNTS),
        }
    }
}

const LOW_COUNTS: f64 = 119.5;
const HIGH_COUNTS: f64 = 12.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub mean_counts_at_max: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(mean_counts_at_max: f64, seed: u64) -> Result<Self> {
        if !(mean_counts_at_max.is_finite() && mean_counts_at_max > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "mean_counts_at_max must be positive, got {mean_counts_at_max}"
            )));
        }
        Ok(Self {
            mean_counts_at_max,
            seed,
        })
    }

    /// `None` for [`NoisePreset::None`].
    pub fn from_preset(preset: NoisePreset, seed: u64) -> Option<Self> {
        preset.mean_counts_at_max().map(|n| Self {
            mean_counts_at_max: n,
            seed,
        })
    }

    /// Counts chosen so that [`expected_snr_db`] of `g` equals `snr_db`.
    pub fn for_expected_snr(g: &Sinogram, snr_db: f64, seed: u64) -> Result<Self> {
        let (sq, sum, max) = g
            .data
            .iter()
            .fold((0.0, 0.0, 0.0f64), |(sq, sum, max), &v| (sq + v * v, sum + v, max.max(v)));
        if !(sum > 0.0 && snr_db.is_finite()) {
            return Err(Error::InvalidArgument(
                "need a nonzero sinogram and a finite target SNR".into(),
            ));
        }
        let scale = sq / (sum * 10f64.powf(snr_db / 10.0));
        Self::new(max / scale, seed)
    }

    /// `max(g) / mean_counts_at_max`; zero for an all-zero sinogram.
    pub fn scale_factor(&self, g: &Sinogram) -> f64 {
        g.data.iter().fold(0.0f64, |m, &v| m.max(v)) / self.mean_counts_at_max
    }
}

/// Expected sinogram SNR in dB, `10 log10(sum g^2 / (s sum g))`.
pub fn expected_snr_db(g: &Sinogram, scale_factor: f64) -> f64 {
    let (sq, sum) = g
        .data
        .iter()
        .fold((0.0, 0.0), |(sq, sum), &v| (sq + v * v, sum + v));
    10.0 * (sq / (scale_factor * sum)).log10()
}

pub fn apply_poisson(g: &Sinogram, model: &NoiseModel) -> Result<Sinogram> {
    if let Some(bad) = g.data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "sinogram entries must be finite and nonnegative, found {bad}"
        )));
    }
    NoiseModel::new(model.mean_counts_at_max, model.seed)?;
    let scale = model.scale_factor(g);
    if scale == 0.0 {
        return Ok(g.clone());
    }
    let flat = column_major(&g.data);
    let noisy: Vec<f64> = flat
        .par_iter()
        .enumerate()
        .map(|(idx, &mean)| {
            let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
            rng.set_stream(idx as u64);
            scale * poisson_sample(mean / scale, &mut rng).expect("validated mean") as f64
        })
        .collect();
    Ok(g.with_data(from_column_major(g.shape(), noisy)))
}

/// One Poisson draw. Knuth's multiplication method below 30, Hormann's
/// PTRS transformed rejection above.
pub fn poisson_sample<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if !(mean.is_finite() && mean >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Poisson mean must be finite and nonnegative, got {mean}"
        )));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    if mean < 30.0 {
        return Ok(knuth(mean, rng));
    }
    Ok(ptrs(mean, rng))
}

fn knuth<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let limit = (-mean).exp();
    let mut k = 0;
    let mut p = rng.random::<f64>();
    while p > limit {
        k += 1;
        p *= rng.random::<f64>();
    }
    k
}

fn ptrs<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v = rng.random::<f64>();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        if lhs <= -mean + k * loglam - ln_factorial(k as u64) {
            return k as u64;
        }
    }
}

fn ln_factorial(k: u64) -> f64 {
    if k < 20 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    let x = k as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ScanGeometry;
    use crate::phantoms::analytic_disc_sinogram;

    fn moments(mean: f64, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<f64> = (0..n)
            .map(|_| poisson_sample(mean, &mut rng).unwrap() as f64)
            .collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        (m, var)
    }

    #[test]
    fn ln_factorial_matches_direct_sum() {
        for k in [0u64, 1, 5, 19, 20, 21, 50, 170] {
            let direct: f64 = (2..=k).map(|i| (i as f64).ln()).sum();
            assert!((ln_factorial(k) - direct).abs() < 1e-10 * direct.max(1.0), "k={k}");
        }
    }

    #[test]
    fn zero_mean_draws_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..100).all(|_| poisson_sample(0.0, &mut rng).unwrap() == 0));
        assert!(poisson_sample(f64::NAN, &mut rng).is_err());
        assert!(poisson_sample(-1.0, &mut rng).is_err());
    }

    #[test]
    fn small_mean_moments() {
        let (m, _) = moments(5.5, 100_000, 11);
        assert!((5.45..=5.55).contains(&m), "{m}");
        let (m, v) = moments(20.0, 100_000, 12);
        assert!((0.97..=1.03).contains(&(v / m)), "{}", v / m);
    }

    #[test]
    fn large_mean_moments() {
        for (mean, seed) in [(30.0, 1), (100.0, 2), (1234.5, 3)] {
            let (m, v) = moments(mean, 100_000, seed);
            assert!((m - mean).abs() < 4.0 * (mean / 1e5).sqrt(), "{mean}: {m}");
            assert!((0.97..=1.03).contains(&(v / mean)), "{mean}: {}", v / mean);
        }
    }

    #[test]
    fn ptrs_matches_pmf_near_the_mode() {
        let mean = 40.0;
        let n = 200_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut hist = vec![0usize; 200];
        for _ in 0..n {
            hist[poisson_sample(mean, &mut rng).unwrap() as usize] += 1;
        }
        for k in 30..50u64 {
            let pmf = (-mean + k as f64 * mean.ln() - ln_factorial(k)).exp();
            let freq = hist[k as usize] as f64 / n as f64;
            let sd = (pmf / n as f64).sqrt();
            assert!((freq - pmf).abs() < 5.0 * sd, "k={k}: {freq} vs {pmf}");
        }
    }

    #[test]
    fn zero_sinogram_stays_zero() {
        let g = ScanGeometry::new(8, 8, 6, 10, 30.0).unwrap();
        let s = Sinogram::zeros(&g);
        let out = apply_poisson(&s, &NoiseModel::new(10.0, 3).unwrap()).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_input() {
        let g = ScanGeometry::new(8, 8, 6, 10, 30.0).unwrap();
        let mut s = Sinogram::zeros(&g);
        s.data[[2, 3]] = -1.0;
        assert!(apply_poisson(&s, &NoiseModel::new(10.0, 3).unwrap()).is_err());
        assert!(NoiseModel::new(0.0, 1).is_err());
        assert!(NoiseModel::new(f64::INFINITY, 1).is_err());
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let g = ScanGeometry::smoke();
        let s = analytic_disc_sinogram(20.0, &g).unwrap();
        let m = NoiseModel::new(50.0, 42).unwrap();
        let a = apply_poisson(&s, &m).unwrap();
        let b = apply_poisson(&s, &m).unwrap();
        assert_eq!(a.data, b.data);
        let c = apply_poisson(&s, &NoiseModel { seed: 43, ..m }).unwrap();
        assert_ne!(a.data, c.data);
        // outputs live on the lattice s * N
        let sf = m.scale_factor(&s);
        assert!(a.data.iter().all(|&v| ((v / sf) - (v / sf).round()).abs() < 1e-9));
    }

    #[test]
    fn pixel_mean_over_seeds() {
        let g = ScanGeometry::new(1, 1, 1, 1, 1.0).unwrap();
        let mut s = Sinogram::zeros(&g);
        s.data[[0, 0]] = 100.0;
        let model = |seed| NoiseModel::new(100.0, seed).unwrap();
        let n = 10_000;
        let mean = (0..n)
            .map(|seed| apply_poisson(&s, &model(seed)).unwrap().data[[0, 0]])
            .sum::<f64>()
            / n as f64;
        assert!((mean - 100.0).abs() < 0.3, "{mean}");
    }

    #[test]
    fn target_snr_round_trips() {
        let g = ScanGeometry::smoke();
        let s = analytic_disc_sinogram(20.0, &g).unwrap();
        let m = NoiseModel::for_expected_snr(&s, 14.5, 0).unwrap();
        assert!((expected_snr_db(&s, m.scale_factor(&s)) - 14.5).abs() < 1e-9);
        assert!(NoiseModel::for_expected_snr(&Sinogram::zeros(&g), 14.5, 0).is_err());
    }

    #[test]
    fn fewer_counts_means_lower_snr() {
        let g = ScanGeometry::smoke();
        let s = analytic_disc_sinogram(30.0, &g).unwrap();
        let snr = |n: f64| {
            let noisy = apply_poisson(&s, &NoiseModel::new(n, 9).unwrap()).unwrap();
            let err = &noisy.data - &s.data;
            20.0 * (crate::grid::norm(&s.data) / crate::grid::norm(&err)).log10()
        };
        let (a, b, c) = (snr(1000.0), snr(100.0), snr(10.0));
        assert!(a > b && b > c, "{a} {b} {c}");
    }

    #[test]
    fn presets_hit_their_snr_bands_on_two_discs() {
        use crate::phantoms::PhantomSpec;
        use crate::SystemMatrix;
        let g = ScanGeometry::smoke();
        let r = SystemMatrix::build(&g).unwrap();
        let clean = r
            .forward_project(&PhantomSpec::two_discs(13.0, 5.5).render(&g).unwrap())
            .unwrap();
        for (preset, lo, hi) in [(NoisePreset::Low, 17.0, 20.0), (NoisePreset::High, 7.5, 10.0)] {
            let model = NoiseModel::from_preset(preset, 1).unwrap();
            let expected = expected_snr_db(&clean, model.scale_factor(&clean));
            assert!((lo..=hi).contains(&expected), "{preset:?}: {expected}");
            for seed in 0..5 {
                let noisy = apply_poisson(&clean, &NoiseModel { seed, ..model }).unwrap();
                let err = &noisy.data - &clean.data;
                let snr = 20.0 * (crate::grid::norm(&clean.data) / crate::grid::norm(&err)).log10();
                assert!((lo..=hi).contains(&snr), "{preset:?} seed {seed}: {snr}");
            }
        }
        assert!(NoiseModel::from_preset(NoisePreset::None, 1).is_none());
    }
}

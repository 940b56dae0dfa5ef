//! Reconstruction quality and parameter sweeps.

use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_shape, Error, Result};
use crate::geometry::SystemMatrix;
use crate::grid::{norm, ImageGrid, Sinogram};
use crate::solver::{reconstruct_joint, SolverConfig};

/// `20 log10(||u|| / ||u - u_rec||)` in dB; `+inf` for an exact match.
pub fn snr(u_true: &ImageGrid, u_rec: &ImageGrid) -> Result<f64> {
    snr_db(&u_true.data, &u_rec.data)
}

/// [`snr`] on bare arrays, e.g. a clean and a noisy sinogram.
pub fn snr_db(truth: &Array2<f64>, rec: &Array2<f64>) -> Result<f64> {
    check_shape(truth.dim(), rec.dim())?;
    let signal = norm(truth);
    if signal == 0.0 {
        return Err(Error::InvalidArgument("reference is identically zero".into()));
    }
    let error = norm(&(truth - rec));
    if error == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (signal / error).log10())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub phantom: String,
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    /// NaN when the cell failed.
    pub snr_db: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub converged: bool,
    /// Highest SNR of its sweep.
    pub best: bool,
    pub error: Option<String>,
}

impl ExperimentRecord {
    pub const CSV_HEADER: &'static str = "phantom,seed,alpha,beta,snr_db,iters,wall_time_s";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{},{:.3}",
            self.phantom, self.seed, self.alpha, self.beta, self.snr_db, self.iterations, self.wall_time_s
        )
    }
}

/// Records as CSV. The best cell and any failures follow as `#` comment lines.
pub fn records_to_csv(records: &[ExperimentRecord]) -> String {
    let mut out = String::from(ExperimentRecord::CSV_HEADER);
    out.push('\n');
    for rec in records {
        out.push_str(&rec.csv_row());
        out.push('\n');
    }
    for rec in records {
        if rec.best {
            out.push_str(&format!("# best: alpha={} beta={} snr_db={:.6}\n", rec.alpha, rec.beta, rec.snr_db));
        }
        if let Some(err) = &rec.error {
            out.push_str(&format!("# failed: alpha={} beta={}: {err}\n", rec.alpha, rec.beta));
        }
    }
    out
}

/// Labels carried into every record of a sweep.
#[derive(Debug, Clone, Default)]
pub struct SweepLabel {
    pub phantom: String,
    pub seed: u64,
}

/// Runs [`reconstruct_joint`] over `alphas x betas`, scoring each cell by
/// [`snr`] against `truth`. A failing cell is recorded, not propagated.
/// Records come back sorted by `(alpha, beta)` with the best cell flagged.
pub fn parameter_sweep(
    g: &Sinogram,
    truth: &ImageGrid,
    r: &SystemMatrix,
    alphas: &[f64],
    betas: &[f64],
    base: &SolverConfig,
    label: &SweepLabel,
) -> Result<Vec<ExperimentRecord>> {
    if alphas.is_empty() || betas.is_empty() {
        return Err(Error::InvalidArgument("sweep grids must be nonempty".into()));
    }
    check_shape(r.geometry().image_shape(), truth.shape())?;
    let cells: Vec<(f64, f64)> = alphas
        .iter()
        .flat_map(|&a| betas.iter().map(move |&b| (a, b)))
        .collect();
    let mut records: Vec<ExperimentRecord> = cells
        .into_par_iter()
        .map(|(alpha, beta)| {
            let cfg = SolverConfig { alpha, beta, ..*base };
            let start = Instant::now();
            let outcome = reconstruct_joint(g, r, &cfg).and_then(|res| Ok((snr(truth, &res.image)?, res)));
            let wall_time_s = start.elapsed().as_secs_f64();
            let mut rec = ExperimentRecord {
                phantom: label.phantom.clone(),
                seed: label.seed,
                alpha,
                beta,
                snr_db: f64::NAN,
                iterations: 0,
                wall_time_s,
                converged: false,
                best: false,
                error: None,
            };
            match outcome {
                Ok((s, res)) => {
                    rec.snr_db = s;
                    rec.iterations = res.iterations();
                    rec.converged = res.converged;
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
            rec
        })
        .collect();
    records.sort_by(|a, b| a.alpha.total_cmp(&b.alpha).then(a.beta.total_cmp(&b.beta)));
    let best = records
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.snr_db.is_nan())
        .max_by(|(_, a), (_, b)| a.snr_db.total_cmp(&b.snr_db))
        .map(|(i, _)| i);
    if let Some(i) = best {
        records[i].best = true;
    }
    Ok(records)
}

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::{Method, RunConfig};
use crate::error::{check_shape, io_at, Error, Result};
use crate::fbp::{fbp, Interpolation};
use crate::geometry::{ScanGeometry, SystemMatrix};
use crate::grid::{ImageGrid, Sinogram};
use crate::io::{
    read_image, read_sinogram, write_image, write_pgm, write_profile_csv, write_sinogram,
};
use crate::metrics::{parameter_sweep, records_to_csv, snr, snr_db, SweepLabel};
use crate::noise::{apply_poisson, expected_snr_db, NoiseModel};
use crate::oracle::{flat_top_value, solve_kappa_with, DISC_GRID};
use crate::phantoms::{middle_line_profile, Axis, PhantomSpec};
use crate::solver::{em_reconstruct, reconstruct_joint, sinogram_rof, Diagnostics};

/// Where the results went and whether every solver run converged.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub out: PathBuf,
    pub converged: bool,
}

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out).map_err(io_at(&cfg.out))?;
    let manifest = cfg.out.join("manifest.toml");
    fs::write(&manifest, cfg.to_toml()?).map_err(io_at(&manifest))?;
    Ok(cfg.out.clone())
}

fn system_matrix(cfg: &RunConfig, geom: &ScanGeometry) -> Result<SystemMatrix> {
    match &cfg.matrix_cache {
        Some(path) => SystemMatrix::load_or_build(geom, path),
        None => SystemMatrix::build(geom),
    }
}

fn add_noise(cfg: &RunConfig, clean: &Sinogram, seed: u64) -> Result<Sinogram> {
    match cfg.counts_at_max() {
        Some(counts) => apply_poisson(clean, &NoiseModel::new(counts, seed)?),
        None => Ok(clean.clone()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_at(path))?;
    Ok(())
}

fn write_log(cfg: &RunConfig, text: &str) -> Result<()> {
    match &cfg.log {
        Some(path) => write_text(path, text),
        None => Ok(()),
    }
}

fn write_results(out: &Path, table: toml::Table) -> Result<()> {
    let text = toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
    write_text(&out.join("results.toml"), &text)
}

fn write_image_set(dir: &Path, image: &ImageGrid) -> Result<()> {
    write_image(&dir.join("image.img"), image)?;
    write_pgm(&dir.join("image.pgm"), &image.data)?;
    write_profile_csv(
        &dir.join("profile_row.csv"),
        "col,value",
        &middle_line_profile(image, Axis::Row).to_vec(),
    )?;
    write_profile_csv(
        &dir.join("profile_col.csv"),
        "row,value",
        &middle_line_profile(image, Axis::Col).to_vec(),
    )
}

fn phantom_data(cfg: &RunConfig, geom: &ScanGeometry, r: &SystemMatrix) -> Result<(PhantomSpec, ImageGrid, Sinogram)> {
    let spec = cfg.phantom_spec()?;
    let truth = spec.render(geom)?;
    let clean = r.forward_project(&truth)?;
    if clean.data.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidArgument(format!(
            "{} phantom projects to an all-zero sinogram",
            spec.name()
        )));
    }
    Ok((spec, truth, clean))
}

fn input_sinogram(cfg: &RunConfig, geom: &ScanGeometry) -> Result<Option<Sinogram>> {
    let Some(path) = &cfg.input else {
        return Ok(None);
    };
    let g = read_sinogram(path)?;
    check_shape(geom.sinogram_shape(), g.shape())?;
    if g.angle_step != geom.angle_step || g.angle_start != geom.angle_start || g.bin_spacing != geom.bin_spacing {
        return Err(Error::Config(format!(
            "{} was sampled with angle step {} from {} and bin spacing {}, geometry says {} from {} and {}",
            path.display(),
            g.angle_step,
            g.angle_start,
            g.bin_spacing,
            geom.angle_step,
            geom.angle_start,
            geom.bin_spacing
        )));
    }
    Ok(Some(g))
}

pub fn simulate(cfg: &RunConfig) -> Result<Outcome> {
    let geom = cfg.scan_geometry()?;
    let r = system_matrix(cfg, &geom)?;
    let (_, truth, clean) = phantom_data(cfg, &geom, &r)?;
    let noisy = add_noise(cfg, &clean, cfg.seed)?;
    let out = prepare_out(cfg)?;
    write_image(&out.join("phantom.img"), &truth)?;
    write_pgm(&out.join("phantom.pgm"), &truth.data)?;
    write_sinogram(&out.join("clean.sino"), &clean)?;
    write_sinogram(&out.join("noisy.sino"), &noisy)?;
    write_pgm(&out.join("noisy.pgm"), &noisy.data)?;

    let mut results = toml::Table::new();
    results.insert("sinogram_snr_db".into(), snr_db(&clean.data, &noisy.data)?.into());
    if let Some(counts) = cfg.counts_at_max() {
        let model = NoiseModel::new(counts, cfg.seed)?;
        let scale = model.scale_factor(&clean);
        results.insert("scale_factor".into(), scale.into());
        results.insert("expected_snr_db".into(), expected_snr_db(&clean, scale).into());
    }
    write_results(&out, results)?;
    Ok(Outcome { out, converged: true })
}

pub fn reconstruct(cfg: &RunConfig) -> Result<Outcome> {
    let geom = cfg.scan_geometry()?;
    let g = input_sinogram(cfg, &geom)?
        .ok_or_else(|| Error::Config("reconstruct needs an input sinogram (--input)".into()))?;
    let truth = cfg.truth.as_deref().map(read_image).transpose()?;
    if let Some(t) = &truth {
        check_shape(geom.image_shape(), t.shape())?;
    }
    let r = system_matrix(cfg, &geom)?;

    let (image, sinogram, table, iterations, converged) = match cfg.method {
        Method::Joint => {
            let res = reconstruct_joint(&g, &r, &cfg.solver_config()?)?;
            let mut table = String::from(Diagnostics::CSV_HEADER);
            table.push('\n');
            for d in &res.history {
                let _ = writeln!(table, "{}", d.csv_row());
            }
            let n = res.iterations();
            (res.image, res.sinogram, table, n, res.converged)
        }
        Method::Em => {
            let res = em_reconstruct(&g, &r, cfg.em_iters, None)?;
            let mut table = String::from("iter,log_likelihood\n");
            for (i, l) in res.log_likelihood.iter().enumerate() {
                let _ = writeln!(table, "{i},{l:e}");
            }
            let projected = r.forward_project(&res.image)?;
            (res.image, projected, table, cfg.em_iters, true)
        }
    };

    let out = prepare_out(cfg)?;
    write_image_set(&out, &image)?;
    write_sinogram(&out.join("sinogram.sino"), &sinogram)?;
    write_text(&out.join("diagnostics.csv"), &table)?;
    write_log(cfg, &table)?;
    let mut results = toml::Table::new();
    results.insert("iterations".into(), (iterations as i64).into());
    results.insert("converged".into(), converged.into());
    if let Some(t) = &truth {
        results.insert("snr_db".into(), snr(t, &image)?.into());
    }
    write_results(&out, results)?;
    Ok(Outcome { out, converged })
}

/// Index of the angle closest to `deg`.
fn nearest_angle(geom: &ScanGeometry, deg: f64) -> usize {
    let idx = ((deg - geom.angle_start) / geom.angle_step).round();
    idx.clamp(0.0, (geom.num_angles - 1) as f64) as usize
}

pub fn scale_space(cfg: &RunConfig) -> Result<Outcome> {
    if cfg.betas.is_empty() {
        return Err(Error::Config("scale-space needs a nonempty beta list (--betas)".into()));
    }
    let geom = cfg.scan_geometry()?;
    let g = match input_sinogram(cfg, &geom)? {
        Some(g) => g,
        None => {
            let r = system_matrix(cfg, &geom)?;
            let (_, _, clean) = phantom_data(cfg, &geom, &r)?;
            add_noise(cfg, &clean, cfg.seed)?
        }
    };
    let out = prepare_out(cfg)?;
    write_sinogram(&out.join("input.sino"), &g)?;

    let slice = nearest_angle(&geom, 45.0);
    let mut table = String::from("beta,iterations,converged,flat_top,image_max\n");
    let mut all_converged = true;
    for &beta in &cfg.betas {
        let res = sinogram_rof(&g, &cfg.rof_config(beta))?;
        let image = fbp(&res.sinogram, &geom, Interpolation::Linear)?;
        let dir = out.join(format!("beta_{beta}"));
        fs::create_dir_all(&dir).map_err(io_at(&dir))?;
        write_sinogram(&dir.join("sinogram.sino"), &res.sinogram)?;
        write_profile_csv(&dir.join("slice45.csv"), "bin,value", &res.sinogram.angle_profile(slice))?;
        write_image_set(&dir, &image)?;
        let peak = image.data.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let _ = writeln!(
            table,
            "{beta},{},{},{:.6},{:.6}",
            res.iterations,
            res.converged,
            flat_top_value(&res.sinogram),
            peak
        );
        all_converged &= res.converged;
    }
    write_text(&out.join("scale_space.csv"), &table)?;
    write_log(cfg, &table)?;
    Ok(Outcome {
        out,
        converged: all_converged,
    })
}

pub fn oracle_table(cfg: &RunConfig) -> Result<Outcome> {
    let grid: Vec<(f64, Vec<f64>)> = match (cfg.radii.is_empty(), cfg.betas.is_empty()) {
        (true, true) => DISC_GRID.iter().map(|(r, b)| (*r, b.to_vec())).collect(),
        (false, false) => cfg.radii.iter().map(|&r| (r, cfg.betas.clone())).collect(),
        _ => {
            return Err(Error::Config(
                "give both radii and betas, or neither for the default table".into(),
            ))
        }
    };
    let numeric = if cfg.numeric {
        let geom = cfg.scan_geometry()?;
        let r = system_matrix(cfg, &geom)?;
        Some((geom, r))
    } else {
        None
    };
    let out = prepare_out(cfg)?;

    let mut table = String::from("r,beta,kappa,delta_an,delta_num,abs_diff\n");
    let mut all_converged = true;
    for (radius, betas) in grid {
        let data = match &numeric {
            Some((geom, r)) => {
                let disc = PhantomSpec::disc(radius).with_rendering(cfg.rendering).render(geom)?;
                Some(r.forward_project(&disc)?)
            }
            None => None,
        };
        for beta in betas {
            let an = solve_kappa_with(radius, beta, cfg.kappa_search(radius))?;
            let num = match &data {
                Some(g) => {
                    let res = sinogram_rof(g, &cfg.rof_config(beta))?;
                    all_converged &= res.converged;
                    Some(flat_top_value(&res.sinogram))
                }
                None => None,
            };
            let _ = match num {
                Some(d) => writeln!(
                    table,
                    "{radius},{beta},{:.6},{:.6},{d:.6},{:.6}",
                    an.kappa,
                    an.delta,
                    (d - an.delta).abs()
                ),
                None => writeln!(table, "{radius},{beta},{:.6},{:.6},,", an.kappa, an.delta),
            };
        }
    }
    write_text(&out.join("oracle_table.csv"), &table)?;
    write_log(cfg, &table)?;
    Ok(Outcome {
        out,
        converged: all_converged,
    })
}

pub fn sweep(cfg: &RunConfig) -> Result<Outcome> {
    if cfg.alphas.is_empty() || cfg.betas.is_empty() {
        return Err(Error::Config("sweep needs nonempty alpha and beta lists".into()));
    }
    let geom = cfg.scan_geometry()?;
    let base = cfg.solver_config()?;
    let r = system_matrix(cfg, &geom)?;
    let (spec, truth, clean) = phantom_data(cfg, &geom, &r)?;
    let out = prepare_out(cfg)?;

    let mut records = Vec::new();
    for seed in cfg.seed_list() {
        let g = add_noise(cfg, &clean, seed)?;
        let label = SweepLabel {
            phantom: spec.name().into(),
            seed,
        };
        records.extend(parameter_sweep(&g, &truth, &r, &cfg.alphas, &cfg.betas, &base, &label)?);
    }
    let table = records_to_csv(&records);
    write_text(&out.join("sweep.csv"), &table)?;
    write_log(cfg, &table)?;
    Ok(Outcome {
        out,
        converged: records.iter().all(|r| r.converged && r.error.is_none()),
    })
}

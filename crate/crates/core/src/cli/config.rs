use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ScanGeometry;
use crate::noise::NoisePreset;
use crate::oracle::KappaSearch;
use crate::phantoms::{PhantomSpec, Rendering};
use crate::solver::{RofConfig, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Joint,
    Em,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SearchKind {
    #[default]
    Golden,
    Fminbnd,
}

/// Fully resolved settings of one command. Every key can come from the
/// config file or a flag of the same name (dashes for underscores).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Filled in when the manifest is written.
    pub command: Option<String>,
    pub version: Option<String>,

    /// `rows,cols,bins,angles,angle_step`.
    pub geometry: String,
    pub matrix_cache: Option<PathBuf>,

    pub phantom: String,
    /// Disc radius, or outer radius of the star.
    pub radius: Option<f64>,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub intensity: f64,
    pub rendering: Rendering,

    pub seed: u64,
    pub seeds: Vec<u64>,
    pub noise_preset: NoisePreset,
    /// Overrides the preset's mean counts in the hottest bin.
    pub counts: Option<f64>,

    pub method: Method,
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
    pub em_iters: usize,
    pub rof_max_iters: usize,
    pub rof_rel_tol: f64,

    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub radii: Vec<f64>,
    pub kappa_search: SearchKind,
    /// Also run the ROF solver in `oracle-table`.
    pub numeric: bool,

    pub input: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub log: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let solver = SolverConfig::default();
        let rof = RofConfig::default();
        Self {
            command: None,
            version: None,
            geometry: "175,175,192,192,1".into(),
            matrix_cache: None,
            phantom: "two_discs".into(),
            radius: None,
            r1: None,
            r2: None,
            intensity: 1.0,
            rendering: Rendering::Binary,
            seed: 0,
            seeds: Vec::new(),
            noise_preset: NoisePreset::None,
            counts: None,
            method: Method::Joint,
            alpha: solver.alpha,
            beta: solver.beta,
            lambda1: solver.lambda1,
            lambda2: solver.lambda2,
            lambda3: solver.lambda3,
            lambda4: solver.lambda4,
            outer_max_iters: solver.outer_max_iters,
            outer_rel_tol: solver.outer_rel_tol,
            cg_max_iters: solver.cg_max_iters,
            cg_rel_tol: solver.cg_rel_tol,
            em_iters: 50,
            rof_max_iters: rof.max_iters,
            rof_rel_tol: rof.rel_tol,
            alphas: Vec::new(),
            betas: Vec::new(),
            radii: Vec::new(),
            kappa_search: SearchKind::Golden,
            numeric: true,
            input: None,
            truth: None,
            out: "out".into(),
            threads: None,
            log: None,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl RunConfig {
    /// Defaults, then `file`, then `overrides`.
    pub fn resolve(file: Option<&Path>, overrides: toml::Table) -> Result<Self> {
        let mut table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(crate::error::io_at(path))?;
                text.parse::<toml::Table>()
                    .map_err(|e| config_err(format!("{}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        table.extend(overrides);
        table.try_into().map_err(config_err)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(config_err)
    }

    pub fn scan_geometry(&self) -> Result<ScanGeometry> {
        parse_geometry(&self.geometry)
    }

    pub fn phantom_spec(&self) -> Result<PhantomSpec> {
        let spec = match self.phantom.as_str() {
            "disc" => PhantomSpec::disc(self.radius.unwrap_or(50.5)),
            "two_discs" => PhantomSpec::two_discs(self.r1.unwrap_or(26.0), self.r2.unwrap_or(11.0)),
            "two_rings" => PhantomSpec::two_rings_default(),
            "star" => PhantomSpec::star(self.radius.unwrap_or(60.0)),
            "thin_rectangle" => PhantomSpec::thin_rectangle(),
            "cross" => PhantomSpec::cross(),
            other => {
                return Err(Error::Config(format!(
                    "unknown phantom {other:?} (disc, two_discs, two_rings, star, thin_rectangle, cross)"
                )))
            }
        };
        Ok(spec.with_intensity(self.intensity).with_rendering(self.rendering))
    }

    /// Mean counts at the hottest bin, `None` for noiseless data.
    pub fn counts_at_max(&self) -> Option<f64> {
        self.counts.or(self.noise_preset.mean_counts_at_max())
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let cfg = SolverConfig {
            alpha: self.alpha,
            beta: self.beta,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            lambda4: self.lambda4,
            outer_max_iters: self.outer_max_iters,
            outer_rel_tol: self.outer_rel_tol,
            cg_max_iters: self.cg_max_iters,
            cg_rel_tol: self.cg_rel_tol,
            ..SolverConfig::default()
        };
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }

    pub fn rof_config(&self, beta: f64) -> RofConfig {
        RofConfig {
            max_iters: self.rof_max_iters,
            rel_tol: self.rof_rel_tol,
            ..RofConfig::with_beta(beta)
        }
    }

    pub fn kappa_search(&self, r: f64) -> KappaSearch {
        match self.kappa_search {
            SearchKind::Golden => KappaSearch::Golden { tol: 1e-10 * r },
            SearchKind::Fminbnd => KappaSearch::Fminbnd { tol_x: 1e-4 },
        }
    }

    /// `seeds`, or just `seed` when that list is empty.
    pub fn seed_list(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.seeds.clone()
        }
    }
}

/// Parses `rows,cols,bins,angles,angle_step`.
pub fn parse_geometry(text: &str) -> Result<ScanGeometry> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let bad = || Error::Config(format!("geometry must be rows,cols,bins,angles,angle_step, got {text:?}"));
    if parts.len() != 5 {
        return Err(bad());
    }
    let dim = |s: &str| s.parse::<usize>().map_err(|_| bad());
    let step = parts[4].parse::<f64>().map_err(|_| bad())?;
    ScanGeometry::new(dim(parts[0])?, dim(parts[1])?, dim(parts[3])?, dim(parts[2])?, step)
        .map_err(config_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_order_is_bins_then_angles() {
        let g = parse_geometry("87, 89,96,48,3.75").unwrap();
        assert_eq!((g.image_rows, g.image_cols, g.num_bins, g.num_angles), (87, 89, 96, 48));
        assert_eq!(g.angle_step, 3.75);
        assert!(parse_geometry("1,2,3").is_err());
        assert!(parse_geometry("8,8,0,8,1").is_err());
    }

    #[test]
    fn flags_win_over_file_and_manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "alpha = 3.0\nbeta = 0.5\nbetas = [1.0, 2.0]\nnoise_preset = \"low\"\n").unwrap();
        let mut flags = toml::Table::new();
        flags.insert("beta".into(), 0.25.into());
        let cfg = RunConfig::resolve(Some(&path), flags).unwrap();
        assert_eq!((cfg.alpha, cfg.beta), (3.0, 0.25));
        assert_eq!(cfg.betas, vec![1.0, 2.0]);
        assert_eq!(cfg.noise_preset, NoisePreset::Low);

        let text = cfg.to_toml().unwrap();
        std::fs::write(&path, text).unwrap();
        assert_eq!(RunConfig::resolve(Some(&path), toml::Table::new()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_and_phantoms_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "alpah = 3.0\n").unwrap();
        assert!(matches!(RunConfig::resolve(Some(&path), toml::Table::new()), Err(Error::Config(_))));
        let cfg = RunConfig {
            phantom: "teapot".into(),
            ..RunConfig::default()
        };
        assert!(matches!(cfg.phantom_spec(), Err(Error::Config(_))));
    }
}

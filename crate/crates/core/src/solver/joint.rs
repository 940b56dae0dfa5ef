use ndarray::{Array2, Zip};

use super::cg::{cg_solve, pcg_solve, CgReport};
use super::{energy_parts, floored_weights, project_nonnegative, shrink_into, Diagnostics, SolverConfig};
use crate::error::{check_shape, Error, Result};
use crate::geometry::SystemMatrix;
use crate::grid::{column_major, from_column_major, norm, ImageGrid, Sinogram};
use crate::operators::{divergence_into, gradient, gradient_into, laplacian_into, VectorField2};

/// Split Bregman iterate, in the units of the data.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub u: Array2<f64>,
    pub u_tilde: Array2<f64>,
    pub v: Array2<f64>,
    pub z: VectorField2,
    pub w: VectorField2,
    pub b1: Array2<f64>,
    pub b2: VectorField2,
    pub b3: VectorField2,
    pub b4: Array2<f64>,
    pub iter: usize,
}

#[derive(Debug, Clone)]
pub struct JointResult {
    /// The nonnegative iterate `u_tilde`.
    pub image: ImageGrid,
    /// The regularised sinogram `v`.
    pub sinogram: Sinogram,
    pub history: Vec<Diagnostics>,
    pub converged: bool,
}

impl JointResult {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }
}

pub(crate) fn project(r: &SystemMatrix, u: &Array2<f64>) -> Array2<f64> {
    let mut y = vec![0.0; r.nrows()];
    r.apply(&column_major(u), &mut y);
    from_column_major(r.geometry().sinogram_shape(), y)
}

pub(crate) fn back_project(r: &SystemMatrix, v: &Array2<f64>) -> Array2<f64> {
    let mut x = vec![0.0; r.ncols()];
    r.apply_transpose(&column_major(v), &mut x);
    from_column_major(r.geometry().image_shape(), x)
}

/// Runs `solve` at `rel_tol`. When the warm start already meets that, solves
/// again to a tenth of its residual, so that an outer step never leaves a
/// subproblem untouched and stalls the relative-change test.
fn with_progress<F>(solve: F, rel_tol: f64) -> (Array2<f64>, CgReport)
where
    F: Fn(f64) -> (Array2<f64>, CgReport),
{
    let first = solve(rel_tol);
    let rep = first.1;
    if rep.iterations == 0 && rep.rel_residual > 0.0 && !rep.breakdown {
        solve(0.1 * rep.rel_residual)
    } else {
        first
    }
}

/// Number of in-grid 4-neighbours, i.e. minus the diagonal of the Neumann Laplacian.
pub(crate) fn neighbour_counts(shape: (usize, usize)) -> Array2<f64> {
    let (m, n) = shape;
    Array2::from_shape_fn(shape, |(i, j)| {
        ((i > 0) as u8 + (i + 1 < m) as u8 + (j > 0) as u8 + (j + 1 < n) as u8) as f64
    })
}

pub struct JointSolver<'a> {
    r: &'a SystemMatrix,
    cfg: SolverConfig,
    g: Array2<f64>,
    weights: Array2<f64>,
    sinogram_tv: bool,
    ru: Array2<f64>,
    state: SolverState,
}

impl<'a> JointSolver<'a> {
    /// Sets up the iteration: `u` is the back-projection of `g` rescaled so
    /// that `sum R u = sum g`, `v = g`, everything else zero.
    pub fn new(g: &Sinogram, r: &'a SystemMatrix, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        check_shape(r.geometry().sinogram_shape(), g.shape())?;
        if let Some(bad) = g.data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "sinogram entries must be finite and nonnegative, found {bad}"
            )));
        }
        if g.data.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidArgument("sinogram is identically zero".into()));
        }
        let gn = g.data.clone();
        let weights = floored_weights(&gn, cfg.g_floor);

        let bp = back_project(r, &gn);
        let total = project(r, &bp).sum();
        let u = if total > 0.0 { bp * (gn.sum() / total) } else { bp };
        let image_shape = u.dim();
        let sino_shape = gn.dim();
        let state = SolverState {
            u_tilde: u.mapv(|x| x.max(0.0)),
            v: gn.clone(),
            z: VectorField2::zeros(image_shape),
            w: VectorField2::zeros(sino_shape),
            b1: Array2::zeros(sino_shape),
            b2: VectorField2::zeros(sino_shape),
            b3: VectorField2::zeros(image_shape),
            b4: Array2::zeros(image_shape),
            iter: 0,
            u,
        };
        let ru = project(r, &state.u);
        Ok(Self {
            r,
            cfg: *cfg,
            g: gn,
            weights,
            sinogram_tv: true,
            ru,
            state,
        })
    }

    /// Drops the `w`, `b2` splitting of the sinogram TV term. Only meaningful
    /// with `beta = 0`, where both variants share their fixed points.
    pub fn with_sinogram_tv(mut self, enabled: bool) -> Self {
        self.sinogram_tv = enabled;
        self
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    /// Replaces the iterate, e.g. to resume from a saved state.
    pub fn set_state(&mut self, state: SolverState) -> Result<()> {
        let (ishape, sshape) = (self.state.u.dim(), self.state.v.dim());
        for (expected, got) in [
            (ishape, state.u.dim()),
            (ishape, state.u_tilde.dim()),
            (ishape, state.z.shape()),
            (ishape, state.b3.shape()),
            (ishape, state.b4.dim()),
            (sshape, state.v.dim()),
            (sshape, state.w.shape()),
            (sshape, state.b1.dim()),
            (sshape, state.b2.shape()),
        ] {
            check_shape(expected, got)?;
        }
        self.ru = project(self.r, &state.u);
        self.state = state;
        Ok(())
    }

    /// `||Ru - v||`, `||grad v - w||`, `||grad u - z||` and `||u - u_tilde||`
    /// at the current iterate.
    pub fn residuals(&self) -> [f64; 4] {
        let s = &self.state;
        [
            norm(&(&self.ru - &s.v)),
            if self.sinogram_tv { gradient(&s.v).sub(&s.w).norm() } else { 0.0 },
            gradient(&s.u).sub(&s.z).norm(),
            norm(&(&s.u - &s.u_tilde)),
        ]
    }

    /// Data and fidelity weights.
    pub fn data(&self) -> (&Array2<f64>, &Array2<f64>) {
        (&self.g, &self.weights)
    }

    /// `x / g + lambda1 x - lambda2 lap(x)`: the sinogram system divided by `g`.
    pub fn apply_sinogram_operator(&self, x: &Array2<f64>, out: &mut Array2<f64>) {
        let l1 = self.cfg.lambda1;
        if self.sinogram_tv {
            laplacian_into(x, out);
            let l2 = self.cfg.lambda2;
            Zip::from(out)
                .and(x)
                .and(&self.weights)
                .for_each(|o, &x, &w| *o = x / w + l1 * x - l2 * *o);
        } else {
            Zip::from(out)
                .and(x)
                .and(&self.weights)
                .for_each(|o, &x, &w| *o = x / w + l1 * x);
        }
    }

    /// `lambda1 R'R x - lambda3 lap(x) + lambda4 x`.
    pub fn apply_image_operator(&self, x: &Array2<f64>, out: &mut Array2<f64>) {
        let rtr = back_project(self.r, &project(self.r, x));
        laplacian_into(x, out);
        let (l1, l3, l4) = (self.cfg.lambda1, self.cfg.lambda3, self.cfg.lambda4);
        Zip::from(out)
            .and(x)
            .and(&rtr)
            .for_each(|o, &x, &q| *o = l1 * q - l3 * *o + l4 * x);
    }

    pub fn sinogram_rhs(&self) -> Array2<f64> {
        let s = &self.state;
        let l1 = self.cfg.lambda1;
        let mut rhs = Array2::zeros(self.g.raw_dim());
        if self.sinogram_tv {
            divergence_into(&s.b2.sub(&s.w), &mut rhs);
            rhs *= self.cfg.lambda2;
        }
        Zip::from(&mut rhs)
            .and(&self.g)
            .and(&self.weights)
            .and(&s.b1)
            .and(&self.ru)
            .for_each(|o, &g, &w, &b, &p| *o += g / w + l1 * (b + p));
        rhs
    }

    pub fn image_rhs(&self) -> Array2<f64> {
        let s = &self.state;
        let bp = back_project(self.r, &(&s.v - &s.b1));
        let mut rhs = Array2::zeros(s.u.raw_dim());
        divergence_into(&s.b3.sub(&s.z), &mut rhs);
        let (l1, l3, l4) = (self.cfg.lambda1, self.cfg.lambda3, self.cfg.lambda4);
        Zip::from(&mut rhs)
            .and(&bp)
            .and(&s.b4)
            .and(&s.u_tilde)
            .for_each(|o, &q, &b, &t| *o = l1 * q + l3 * *o - l4 * (b - t));
        rhs
    }

    /// Solves for `v` with Jacobi-preconditioned CG, warm-started from the current `v`.
    pub fn solve_sinogram_subproblem(&self) -> (Array2<f64>, CgReport) {
        let rhs = self.sinogram_rhs();
        let l1 = self.cfg.lambda1;
        let l2 = if self.sinogram_tv { self.cfg.lambda2 } else { 0.0 };
        let nbrs = neighbour_counts(rhs.dim());
        let mut inv_diag = Array2::zeros(rhs.raw_dim());
        Zip::from(&mut inv_diag)
            .and(&self.weights)
            .and(&nbrs)
            .for_each(|d, &w, &k| *d = 1.0 / (1.0 / w + l1 + l2 * k));
        let solve = |tol| {
            pcg_solve(
                |x, out| self.apply_sinogram_operator(x, out),
                Some(&inv_diag),
                &rhs,
                self.state.v.clone(),
                self.cfg.cg_max_iters,
                tol,
            )
        };
        with_progress(solve, self.cfg.cg_rel_tol)
    }

    /// Solves for `u` with CG, warm-started from the current `u`.
    pub fn solve_image_subproblem(&self) -> (Array2<f64>, CgReport) {
        let rhs = self.image_rhs();
        let solve = |tol| {
            cg_solve(
                |x, out| self.apply_image_operator(x, out),
                &rhs,
                self.state.u.clone(),
                self.cfg.cg_max_iters,
                tol,
            )
        };
        with_progress(solve, self.cfg.cg_rel_tol)
    }

    /// One outer iteration: `v`, `u`, `u_tilde`, `z`, `w`, then `b1..b4`.
    pub fn step(&mut self) -> Diagnostics {
        let (v, rep_v) = self.solve_sinogram_subproblem();
        self.state.v = v;
        let (u, rep_u) = self.solve_image_subproblem();
        self.state.u = u;
        self.ru = project(self.r, &self.state.u);

        let s = &mut self.state;
        let u_tilde = project_nonnegative(&s.u, &s.b4);

        let grad_u = gradient(&s.u);
        shrink_into(&s.b3.add(&grad_u), self.cfg.alpha / self.cfg.lambda3, &mut s.z);

        let mut grad_v = VectorField2::zeros(s.v.dim());
        gradient_into(&s.v, &mut grad_v);
        if self.sinogram_tv {
            shrink_into(&s.b2.add(&grad_v), self.cfg.beta / self.cfg.lambda2, &mut s.w);
        }

        Zip::from(&mut s.b1)
            .and(&self.ru)
            .and(&s.v)
            .for_each(|b, &p, &v| *b += p - v);
        if self.sinogram_tv {
            s.b2.add_diff(&grad_v, &s.w);
        }
        s.b3.add_diff(&grad_u, &s.z);
        Zip::from(&mut s.b4)
            .and(&s.u)
            .and(&u_tilde)
            .for_each(|b, &u, &t| *b += u - t);

        let change = norm(&(&u_tilde - &s.u_tilde));
        let size = norm(&u_tilde);
        let rel_change = if size > 0.0 {
            change / size
        } else if change == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        s.u_tilde = u_tilde;
        s.iter += 1;

        let residuals = [
            norm(&(&self.ru - &s.v)),
            if self.sinogram_tv { grad_v.sub(&s.w).norm() } else { 0.0 },
            grad_u.sub(&s.z).norm(),
            norm(&(&s.u - &s.u_tilde)),
        ];
        let ru_tilde = project(self.r, &s.u_tilde);
        let energy = energy_parts(&s.u_tilde, &ru_tilde, &self.g, &self.weights, &self.cfg);

        Diagnostics {
            iter: s.iter,
            energy,
            residuals,
            rel_change,
            cg_iters_v: rep_v.iterations,
            cg_iters_u: rep_u.iterations,
            cg_converged: rep_v.converged && rep_u.converged,
        }
    }

    /// Iterates until the relative change of `u_tilde` drops below
    /// `outer_rel_tol` or `outer_max_iters` is reached.
    pub fn run<F>(mut self, mut observer: F) -> JointResult
    where
        F: FnMut(&SolverState, &Diagnostics),
    {
        let mut history = Vec::new();
        let mut converged = false;
        while self.state.iter < self.cfg.outer_max_iters {
            let d = self.step();
            observer(&self.state, &d);
            history.push(d);
            if d.rel_change < self.cfg.outer_rel_tol {
                converged = true;
                break;
            }
        }
        let geom = self.r.geometry();
        JointResult {
            image: ImageGrid {
                data: self.state.u_tilde.clone(),
                pixel_size: geom.pixel_size,
            },
            sinogram: Sinogram::wrap(self.state.v.clone(), geom),
            history,
            converged,
        }
    }
}

pub fn reconstruct_joint(g: &Sinogram, r: &SystemMatrix, cfg: &SolverConfig) -> Result<JointResult> {
    reconstruct_joint_with(g, r, cfg, |_, _| {})
}

/// [`reconstruct_joint`] with a callback after every outer iteration.
pub fn reconstruct_joint_with<F>(
    g: &Sinogram,
    r: &SystemMatrix,
    cfg: &SolverConfig,
    observer: F,
) -> Result<JointResult>
where
    F: FnMut(&SolverState, &Diagnostics),
{
    Ok(JointSolver::new(g, r, cfg)?.run(observer))
}

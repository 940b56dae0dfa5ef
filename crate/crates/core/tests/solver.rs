mod common;

use common::*;
use nalgebra::DMatrix;
use ndarray::Array2;
use sinotv::noise::{apply_poisson, NoiseModel, NoisePreset};
use sinotv::phantoms::PhantomSpec;
use sinotv::solver::{reconstruct_joint, JointSolver, SolverConfig};
use sinotv::{ScanGeometry, Sinogram, SystemMatrix};

#[test]
fn sinogram_system_matches_dense_assembly() {
    let geom = ScanGeometry::new(6, 6, 8, 8, 22.5).unwrap();
    let r = SystemMatrix::build(&geom).unwrap();
    let d = Dense::new(&r);
    let g = r.forward_project(&block(&geom)).unwrap();
    let cfg = exact(SolverConfig::with_weights(0.5, 0.3));
    let mut solver = JointSolver::new(&g, &r, &cfg).unwrap();
    randomise(&mut solver, 1);

    let (gd, weights) = solver.data();
    let (gv, wv) = (vec_of(gd), vec_of(weights));
    let k = gv.len();
    let mut a = DMatrix::from_diagonal(&wv.map(|w| 1.0 / w + cfg.lambda1));
    a += cfg.lambda2 * d.dv.transpose() * &d.dv;

    let st = solver.state();
    let x = random_array(geom.sinogram_shape(), -1.0, 1.0, &mut rng(2));
    let mut ax = Array2::zeros(x.raw_dim());
    solver.apply_sinogram_operator(&x, &mut ax);
    assert!((vec_of(&ax) - &a * vec_of(&x)).norm() < 1e-12 * (&a * vec_of(&x)).norm());

    let ru = &d.r * vec_of(&st.u);
    let rhs = gv.component_div(&wv)
        + cfg.lambda1 * (vec_of(&st.b1) + ru)
        - cfg.lambda2 * d.dv.transpose() * (field_vec(&st.b2) - field_vec(&st.w));
    assert_eq!(rhs.len(), k);
    let got = vec_of(&solver.sinogram_rhs());
    assert!((&got - &rhs).norm() < 1e-12 * rhs.norm());

    let (v, report) = solver.solve_sinogram_subproblem();
    assert!(report.converged);
    let expected = solve(&a, &rhs);
    assert!((vec_of(&v) - &expected).norm() < 1e-9 * expected.norm());
}

#[test]
fn image_system_matches_dense_assembly() {
    let geom = ScanGeometry::new(16, 16, 12, 24, 15.0).unwrap();
    let r = SystemMatrix::build(&geom).unwrap();
    let d = Dense::new(&r);
    let g = r.forward_project(&block(&geom)).unwrap();
    let cfg = exact(SolverConfig::default());
    let mut solver = JointSolver::new(&g, &r, &cfg).unwrap();
    randomise(&mut solver, 3);
    let n = geom.image_rows * geom.image_cols;

    let a = cfg.lambda1 * d.r.transpose() * &d.r
        + cfg.lambda3 * d.du.transpose() * &d.du
        + cfg.lambda4 * DMatrix::identity(n, n);
    let x = random_array(geom.image_shape(), -1.0, 1.0, &mut rng(4));
    let mut ax = Array2::zeros(x.raw_dim());
    solver.apply_image_operator(&x, &mut ax);
    assert!((vec_of(&ax) - &a * vec_of(&x)).norm() < 1e-12 * (&a * vec_of(&x)).norm());

    let st = solver.state();
    let rhs = cfg.lambda1 * d.r.transpose() * (vec_of(&st.v) - vec_of(&st.b1))
        + cfg.lambda3 * d.du.transpose() * (field_vec(&st.z) - field_vec(&st.b3))
        + cfg.lambda4 * (vec_of(&st.u_tilde) - vec_of(&st.b4));
    let got = vec_of(&solver.image_rhs());
    assert!((&got - &rhs).norm() < 1e-12 * rhs.norm());

    let (u, report) = solver.solve_image_subproblem();
    assert!(report.converged);
    let expected = solve(&a, &rhs);
    assert!((vec_of(&u) - &expected).norm() < 1e-9 * expected.norm());
}

#[test]
fn one_iteration_unrolled_by_hand() {
    for (what, err) in one_iteration_errors() {
        assert!(err < 1e-9, "{what}: relative error {err:e}");
    }
}

#[test]
fn positivity_and_feasibility_on_two_discs() {
    let geom = ScanGeometry::smoke();
    let r = SystemMatrix::build(&geom).unwrap();
    let truth = PhantomSpec::two_discs(13.0, 5.5).render(&geom).unwrap();
    let clean = r.forward_project(&truth).unwrap();
    let g = apply_poisson(&clean, &NoiseModel::from_preset(NoisePreset::Low, 0).unwrap()).unwrap();
    let cfg = SolverConfig {
        outer_max_iters: 3000,
        outer_rel_tol: 1e-5,
        ..SolverConfig::with_weights(6.0, 0.001)
    };
    let solver = JointSolver::new(&g, &r, &cfg).unwrap();
    let mut reference = solver.residuals();
    let mut min_seen = f64::INFINITY;
    let res = solver.run(|st, d| {
        min_seen = min_seen.min(st.u_tilde.iter().cloned().fold(f64::INFINITY, f64::min));
        for (r, x) in reference.iter_mut().zip(d.residuals) {
            if *r == 0.0 {
                *r = x;
            }
        }
    });
    assert!(res.converged);
    assert!(min_seen >= 0.0);
    let last = res.history.last().unwrap().residuals;
    for k in 0..4 {
        assert!(last[k] < 1e-2 * reference[k], "residual {k}: {} -> {}", reference[k], last[k]);
    }
}

#[test]
fn zero_beta_does_not_depend_on_the_sinogram_splitting() {
    let geom = ScanGeometry::new(12, 12, 12, 18, 15.0).unwrap();
    let r = SystemMatrix::build(&geom).unwrap();
    let g = r.forward_project(&block(&geom)).unwrap();
    let cfg = SolverConfig {
        lambda1: 1.0,
        lambda3: 10.0,
        lambda4: 10.0,
        outer_max_iters: 20_000,
        outer_rel_tol: 1e-10,
        cg_rel_tol: 1e-12,
        cg_max_iters: 2000,
        ..SolverConfig::with_weights(0.5, 0.0)
    };
    let with = JointSolver::new(&g, &r, &cfg).unwrap().run(|_, _| {});
    let without = JointSolver::new(&g, &r, &cfg)
        .unwrap()
        .with_sinogram_tv(false)
        .run(|_, _| {});
    let err = rel_err(&with.image.data, &without.image.data);
    assert!(with.converged && without.converged);
    assert!(err < 1e-6, "{err:e}");
}

#[test]
fn noiseless_small_alpha_fits_the_data() {
    let geom = ScanGeometry::new(24, 24, 36, 36, 5.0).unwrap();
    let r = SystemMatrix::build(&geom).unwrap();
    let truth = block(&geom);
    let g = r.forward_project(&truth).unwrap();
    let cfg = SolverConfig {
        outer_max_iters: 3000,
        ..SolverConfig::with_weights(1e-3, 0.0)
    };
    let res = reconstruct_joint(&g, &r, &cfg).unwrap();
    let fit = r.forward_project(&res.image).unwrap();
    let residual = rel_err(&fit.data, &g.data);
    assert!(residual < 0.02, "data residual {residual}");
}

#[test]
fn reruns_are_bit_identical() {
    let geom = ScanGeometry::new(16, 16, 16, 24, 7.5).unwrap();
    let r = SystemMatrix::build(&geom).unwrap();
    let clean = r.forward_project(&block(&geom)).unwrap();
    let g = apply_poisson(&clean, &NoiseModel::new(40.0, 9).unwrap()).unwrap();
    let cfg = SolverConfig {
        outer_max_iters: 40,
        ..SolverConfig::with_weights(0.5, 0.05)
    };
    let a = reconstruct_joint(&g, &r, &cfg).unwrap();
    let b = reconstruct_joint(&g, &r, &cfg).unwrap();
    assert_eq!(a.image.data, b.image.data);
    assert_eq!(a.sinogram.data, b.sinogram.data);
    assert_eq!(a.history, b.history);
}

#[test]
fn rejects_mismatched_or_invalid_input() {
    let geom = ScanGeometry::new(8, 8, 8, 8, 22.5).unwrap();
    let r = SystemMatrix::build(&geom).unwrap();
    let other = ScanGeometry::new(8, 8, 8, 10, 22.5).unwrap();
    let g = Sinogram::zeros(&other);
    assert!(reconstruct_joint(&g, &r, &SolverConfig::default()).is_err());
    let mut g = r.forward_project(&block(&geom)).unwrap();
    let bad = SolverConfig {
        lambda3: -1.0,
        ..SolverConfig::default()
    };
    assert!(reconstruct_joint(&g, &r, &bad).is_err());
    g.data[[0, 0]] = f64::NAN;
    assert!(reconstruct_joint(&g, &r, &SolverConfig::default()).is_err());
}

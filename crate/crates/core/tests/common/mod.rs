#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sinotv::grid::{column_major, from_column_major};
use ndarray::s;
use sinotv::operators::{gradient, VectorField2};
use sinotv::solver::{JointSolver, SolverConfig};
use sinotv::{ImageGrid, ScanGeometry, SystemMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_array(shape: (usize, usize), lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.random_range(lo..hi))
}

pub fn random_field(shape: (usize, usize), rng: &mut ChaCha8Rng) -> VectorField2 {
    VectorField2 {
        c1: random_array(shape, -1.0, 1.0, rng),
        c2: random_array(shape, -1.0, 1.0, rng),
    }
}

pub fn vec_of(a: &Array2<f64>) -> DVector<f64> {
    DVector::from_column_slice(&column_major(a))
}

pub fn array_of(shape: (usize, usize), v: &DVector<f64>) -> Array2<f64> {
    from_column_major(shape, v.as_slice().to_vec())
}

pub fn field_vec(z: &VectorField2) -> DVector<f64> {
    let mut out = column_major(&z.c1).into_owned();
    out.extend_from_slice(&column_major(&z.c2));
    DVector::from_vec(out)
}

pub fn field_of(shape: (usize, usize), v: &DVector<f64>) -> VectorField2 {
    let n = shape.0 * shape.1;
    VectorField2 {
        c1: from_column_major(shape, v.as_slice()[..n].to_vec()),
        c2: from_column_major(shape, v.as_slice()[n..].to_vec()),
    }
}

/// The system matrix as a dense `rays x pixels` matrix.
pub fn dense_radon(r: &SystemMatrix) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(r.nrows(), r.ncols());
    for row in 0..r.nrows() {
        for (col, v) in r.row(row) {
            m[(row, col)] += v;
        }
    }
    m
}

/// Forward-difference gradient as a dense `2N x N` matrix, column by column.
pub fn dense_gradient(shape: (usize, usize)) -> DMatrix<f64> {
    let n = shape.0 * shape.1;
    let mut m = DMatrix::zeros(2 * n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let g = field_vec(&gradient(&from_column_major(shape, e)));
        m.set_column(j, &g);
    }
    m
}

pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    a.clone().lu().solve(b).expect("nonsingular")
}

/// Isotropic shrinkage of a stacked `[c1; c2]` vector.
pub fn shrink(x: &DVector<f64>, t: f64) -> DVector<f64> {
    let n = x.len() / 2;
    let mut out = x.clone();
    for p in 0..n {
        let (a, b) = (x[p], x[p + n]);
        let mag = (a * a + b * b).sqrt();
        let keep = if mag > t { (mag - t) / mag } else { 0.0 };
        out[p] = keep * a;
        out[p + n] = keep * b;
    }
    out
}

pub fn rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff = (a - b).mapv(|x| x * x).sum().sqrt();
    let size = b.mapv(|x| x * x).sum().sqrt();
    diff / size.max(f64::MIN_POSITIVE)
}

pub fn block(geom: &ScanGeometry) -> ImageGrid {
    let mut u = ImageGrid::zeros(geom);
    let (m, n) = geom.image_shape();
    u.data.slice_mut(s![m / 4..3 * m / 4, n / 3..2 * n / 3]).fill(1.0);
    u.data[[m / 2, n / 4]] = 2.0;
    u
}

pub fn exact(cfg: SolverConfig) -> SolverConfig {
    SolverConfig {
        cg_max_iters: 2000,
        cg_rel_tol: 1e-13,
        ..cfg
    }
}

pub fn randomise(solver: &mut JointSolver, seed: u64) {
    let mut rng = rng(seed);
    let mut st = solver.state().clone();
    let (ishape, sshape) = (st.u.dim(), st.v.dim());
    st.v = random_array(sshape, 0.5, 3.0, &mut rng);
    st.u = random_array(ishape, -0.2, 1.0, &mut rng);
    st.u_tilde = st.u.mapv(|x| x.max(0.0));
    st.z = random_field(ishape, &mut rng);
    st.w = random_field(sshape, &mut rng);
    st.b1 = random_array(sshape, -0.5, 0.5, &mut rng);
    st.b2 = random_field(sshape, &mut rng);
    st.b3 = random_field(ishape, &mut rng);
    st.b4 = random_array(ishape, -0.3, 0.3, &mut rng);
    solver.set_state(st).unwrap();
}

pub struct Dense {
    pub r: DMatrix<f64>,
    pub dv: DMatrix<f64>,
    pub du: DMatrix<f64>,
}

impl Dense {
    pub fn new(r: &SystemMatrix) -> Self {
        let geom = r.geometry();
        Dense {
            r: dense_radon(r),
            dv: dense_gradient(geom.sinogram_shape()),
            du: dense_gradient(geom.image_shape()),
        }
    }
}

/// Relative error of every state field after one solver step against the
/// same step assembled densely on a 4x4 image.
pub fn one_iteration_errors() -> Vec<(&'static str, f64)> {
    let geom = ScanGeometry::new(4, 4, 6, 6, 30.0).unwrap();
    let r = SystemMatrix::build(&geom).unwrap();
    let d = Dense::new(&r);
    let g = r.forward_project(&block(&geom)).unwrap();
    let cfg = exact(SolverConfig {
        lambda1: 0.7,
        lambda2: 1.3,
        lambda3: 2.0,
        lambda4: 1.5,
        ..SolverConfig::with_weights(0.4, 0.25)
    });
    let mut solver = JointSolver::new(&g, &r, &cfg).unwrap();
    randomise(&mut solver, 5);
    let ishape = geom.image_shape();
    let n = ishape.0 * ishape.1;

    let before = solver.state().clone();
    let (gv, wv) = {
        let (g, w) = solver.data();
        (vec_of(g), vec_of(w))
    };
    let (b1, b2, b3, b4) = (
        vec_of(&before.b1),
        field_vec(&before.b2),
        field_vec(&before.b3),
        vec_of(&before.b4),
    );
    let (z, w) = (field_vec(&before.z), field_vec(&before.w));

    let av = DMatrix::from_diagonal(&wv.map(|w| 1.0 / w + cfg.lambda1)) + cfg.lambda2 * d.dv.transpose() * &d.dv;
    let rhs_v = gv.component_div(&wv) + cfg.lambda1 * (&b1 + &d.r * vec_of(&before.u))
        - cfg.lambda2 * d.dv.transpose() * (&b2 - &w);
    let v = solve(&av, &rhs_v);

    let au = cfg.lambda1 * d.r.transpose() * &d.r
        + cfg.lambda3 * d.du.transpose() * &d.du
        + cfg.lambda4 * DMatrix::identity(n, n);
    let rhs_u = cfg.lambda1 * d.r.transpose() * (&v - &b1)
        + cfg.lambda3 * d.du.transpose() * (&z - &b3)
        + cfg.lambda4 * (vec_of(&before.u_tilde) - &b4);
    let u = solve(&au, &rhs_u);

    let u_tilde = (&b4 + &u).map(|x| x.max(0.0));
    let grad_u = &d.du * &u;
    let grad_v = &d.dv * &v;
    let z_new = shrink(&(&b3 + &grad_u), cfg.alpha / cfg.lambda3);
    let w_new = shrink(&(&b2 + &grad_v), cfg.beta / cfg.lambda2);
    let b1_new = &b1 + &d.r * &u - &v;
    let b2_new = &b2 + &grad_v - &w_new;
    let b3_new = &b3 + &grad_u - &z_new;
    let b4_new = &b4 + &u - &u_tilde;

    let diag = solver.step();
    let st = solver.state();
    let close = |got: DVector<f64>, want: &DVector<f64>| (&got - want).norm() / want.norm().max(1e-300);
    let counters = if st.iter == 1 && diag.iter == 1 { 0.0 } else { 1.0 };
    vec![
        ("v", close(vec_of(&st.v), &v)),
        ("u", close(vec_of(&st.u), &u)),
        ("u_tilde", close(vec_of(&st.u_tilde), &u_tilde)),
        ("z", close(field_vec(&st.z), &z_new)),
        ("w", close(field_vec(&st.w), &w_new)),
        ("b1", close(vec_of(&st.b1), &b1_new)),
        ("b2", close(field_vec(&st.b2), &b2_new)),
        ("b3", close(field_vec(&st.b3), &b3_new)),
        ("b4", close(vec_of(&st.b4), &b4_new)),
        ("iteration counter", counters),
    ]
}

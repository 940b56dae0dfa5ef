//! C interface to `sinotv`.
//!
//! Every function returns a [`SinotvStatus`]; on failure the message is kept
//! per thread and can be fetched with [`sinotv_last_error`]. Images are passed
//! row-major as `rows * cols` doubles, sinograms row-major as
//! `bins * angles` doubles (one row per detector bin).

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ndarray::{Array2, ArrayView2, ShapeBuilder};
use sinotv::noise::{apply_poisson, NoiseModel};
use sinotv::solver::{reconstruct_joint, sinogram_rof, RofConfig, SolverConfig};
use sinotv::{Error, ImageGrid, ScanGeometry, Sinogram, SystemMatrix};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinotvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidGeometry = 2,
    DimensionMismatch = 3,
    InvalidArgument = 4,
    Format = 5,
    Config = 6,
    Io = 7,
    Panic = 8,
}

/// Opaque system matrix.
pub struct SinotvMatrix {
    inner: SystemMatrix,
}

/// Settings of the joint solver. Start from [`sinotv_solver_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SinotvSolverConfig {
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
    pub g_floor: f64,
}

impl From<SolverConfig> for SinotvSolverConfig {
    fn from(c: SolverConfig) -> Self {
        Self {
            alpha: c.alpha,
            beta: c.beta,
            lambda1: c.lambda1,
            lambda2: c.lambda2,
            lambda3: c.lambda3,
            lambda4: c.lambda4,
            outer_max_iters: c.outer_max_iters,
            outer_rel_tol: c.outer_rel_tol,
            cg_max_iters: c.cg_max_iters,
            cg_rel_tol: c.cg_rel_tol,
            g_floor: c.g_floor,
        }
    }
}

impl From<SinotvSolverConfig> for SolverConfig {
    fn from(c: SinotvSolverConfig) -> Self {
        Self {
            alpha: c.alpha,
            beta: c.beta,
            lambda1: c.lambda1,
            lambda2: c.lambda2,
            lambda3: c.lambda3,
            lambda4: c.lambda4,
            outer_max_iters: c.outer_max_iters,
            outer_rel_tol: c.outer_rel_tol,
            cg_max_iters: c.cg_max_iters,
            cg_rel_tol: c.cg_rel_tol,
            g_floor: c.g_floor,
        }
    }
}

/// Settings of the sinogram ROF solver.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SinotvRofConfig {
    pub beta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub cg_max_iters: usize,
    pub cg_rel_tol: f64,
    pub g_floor: f64,
}

impl From<RofConfig> for SinotvRofConfig {
    fn from(c: RofConfig) -> Self {
        Self {
            beta: c.beta,
            lambda1: c.lambda1,
            lambda2: c.lambda2,
            max_iters: c.max_iters,
            rel_tol: c.rel_tol,
            cg_max_iters: c.cg_max_iters,
            cg_rel_tol: c.cg_rel_tol,
            g_floor: c.g_floor,
        }
    }
}

impl From<SinotvRofConfig> for RofConfig {
    fn from(c: SinotvRofConfig) -> Self {
        Self {
            beta: c.beta,
            lambda1: c.lambda1,
            lambda2: c.lambda2,
            max_iters: c.max_iters,
            rel_tol: c.rel_tol,
            cg_max_iters: c.cg_max_iters,
            cg_rel_tol: c.cg_rel_tol,
            g_floor: c.g_floor,
        }
    }
}

/// Outcome of an iterative solve.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SinotvSolveInfo {
    pub iterations: usize,
    pub converged: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(SinotvStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidGeometry(_) => SinotvStatus::InvalidGeometry,
            Error::DimensionMismatch { .. } => SinotvStatus::DimensionMismatch,
            Error::InvalidArgument(_) => SinotvStatus::InvalidArgument,
            Error::Format(_) => SinotvStatus::Format,
            Error::Config(_) => SinotvStatus::Config,
            Error::Io(_) => SinotvStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SinotvStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SinotvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SinotvStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SinotvStatus::Panic
        }
    }
}

unsafe fn input<'a>(ptr: *const f64, len: usize, expected: usize, what: &str) -> Result<&'a [f64], Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    if len != expected {
        return Err(Failure(
            SinotvStatus::DimensionMismatch,
            format!("{what} has {len} values, expected {expected}"),
        ));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a>(ptr: *mut f64, len: usize, expected: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    if len != expected {
        return Err(Failure(
            SinotvStatus::DimensionMismatch,
            format!("{what} has room for {len} values, expected {expected}"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn matrix<'a>(m: *const SinotvMatrix) -> Result<&'a SystemMatrix, Failure> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| null("matrix"))
}

fn row_major(shape: (usize, usize), values: &[f64]) -> Array2<f64> {
    let mut a = Array2::zeros(shape.f());
    a.assign(&ArrayView2::from_shape(shape, values).expect("length checked"));
    a
}

fn bare_sinogram(data: Array2<f64>, angle_step: f64) -> Sinogram {
    Sinogram {
        data,
        bin_spacing: 1.0,
        angle_start: 0.0,
        angle_step,
    }
}

fn copy_out(a: &Array2<f64>, out: &mut [f64]) {
    for (dst, src) in out.iter_mut().zip(a.iter()) {
        *dst = *src;
    }
}

fn sinogram_shape(bins: usize, angles: usize) -> Result<usize, Failure> {
    bins.checked_mul(angles).filter(|&n| n > 0).ok_or_else(|| {
        Failure(
            SinotvStatus::InvalidArgument,
            format!("sinogram shape {bins}x{angles} is empty or too large"),
        )
    })
}

/// Copies the message of the last failure on this thread into `buf`
/// (NUL-terminated, truncated to `len`). Returns the full message length, or
/// 0 when there is none.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sinotv_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
        None => 0,
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sinotv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds the system matrix for a square-pixel parallel-beam geometry with
/// unit pixels and bins, angles starting at 0.
///
/// # Safety
/// `out` must be a valid pointer. The handle must be released with
/// [`sinotv_matrix_free`].
#[no_mangle]
pub unsafe extern "C" fn sinotv_matrix_new(
    rows: usize,
    cols: usize,
    num_angles: usize,
    num_bins: usize,
    angle_step_deg: f64,
    out: *mut *mut SinotvMatrix,
) -> SinotvStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let geom = ScanGeometry::new(rows, cols, num_angles, num_bins, angle_step_deg)?;
        let inner = SystemMatrix::build(&geom)?;
        *out = Box::into_raw(Box::new(SinotvMatrix { inner }));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from [`sinotv_matrix_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sinotv_matrix_free(m: *mut SinotvMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of nonzero entries.
///
/// # Safety
/// `m` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sinotv_matrix_nnz(m: *const SinotvMatrix, out: *mut usize) -> SinotvStatus {
    guard(|| {
        let r = matrix(m)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = r.nnz();
        Ok(())
    })
}

/// `sino = R image`.
///
/// # Safety
/// `m` must be a live handle; `image` and `sino` must hold `image_len` and
/// `sino_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sinotv_forward_project(
    m: *const SinotvMatrix,
    image: *const f64,
    image_len: usize,
    sino: *mut f64,
    sino_len: usize,
) -> SinotvStatus {
    guard(|| {
        let r = matrix(m)?;
        let geom = r.geometry();
        let (ishape, sshape) = (geom.image_shape(), geom.sinogram_shape());
        let u = input(image, image_len, ishape.0 * ishape.1, "image")?;
        let out = output(sino, sino_len, sshape.0 * sshape.1, "sino")?;
        let g = r.forward_project(&ImageGrid::from_array(row_major(ishape, u), geom)?)?;
        copy_out(&g.data, out);
        Ok(())
    })
}

/// `image = R^T sino`.
///
/// # Safety
/// As for [`sinotv_forward_project`].
#[no_mangle]
pub unsafe extern "C" fn sinotv_back_project(
    m: *const SinotvMatrix,
    sino: *const f64,
    sino_len: usize,
    image: *mut f64,
    image_len: usize,
) -> SinotvStatus {
    guard(|| {
        let r = matrix(m)?;
        let geom = r.geometry();
        let (ishape, sshape) = (geom.image_shape(), geom.sinogram_shape());
        let g = input(sino, sino_len, sshape.0 * sshape.1, "sino")?;
        let out = output(image, image_len, ishape.0 * ishape.1, "image")?;
        let u = r.back_project(&Sinogram::from_array(row_major(sshape, g), geom)?)?;
        copy_out(&u.data, out);
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn sinotv_solver_config_default() -> SinotvSolverConfig {
    SolverConfig::default().into()
}

#[no_mangle]
pub extern "C" fn sinotv_rof_config_default(beta: f64) -> SinotvRofConfig {
    RofConfig::with_beta(beta).into()
}

/// Joint image and sinogram TV reconstruction of `sino`. Writes the
/// nonnegative image, and the regularised sinogram when `sino_out` is not
/// null. Not converging within the iteration cap is not an error; check
/// `info`.
///
/// # Safety
/// `m` and `cfg` must be valid; buffers must hold the stated lengths;
/// `sino_out` and `info` may be null.
#[no_mangle]
pub unsafe extern "C" fn sinotv_reconstruct_joint(
    m: *const SinotvMatrix,
    cfg: *const SinotvSolverConfig,
    sino: *const f64,
    sino_len: usize,
    image_out: *mut f64,
    image_len: usize,
    sino_out: *mut f64,
    sino_out_len: usize,
    info: *mut SinotvSolveInfo,
) -> SinotvStatus {
    guard(|| {
        let r = matrix(m)?;
        let cfg: SolverConfig = (*cfg.as_ref().ok_or_else(|| null("cfg"))?).into();
        let geom = r.geometry();
        let (ishape, sshape) = (geom.image_shape(), geom.sinogram_shape());
        let g = input(sino, sino_len, sshape.0 * sshape.1, "sino")?;
        let image_out = output(image_out, image_len, ishape.0 * ishape.1, "image_out")?;
        let sino_out = if sino_out.is_null() {
            None
        } else {
            Some(output(sino_out, sino_out_len, sshape.0 * sshape.1, "sino_out")?)
        };
        let res = reconstruct_joint(&Sinogram::from_array(row_major(sshape, g), geom)?, r, &cfg)?;
        copy_out(&res.image.data, image_out);
        if let Some(out) = sino_out {
            copy_out(&res.sinogram.data, out);
        }
        if let Some(info) = info.as_mut() {
            *info = SinotvSolveInfo {
                iterations: res.iterations(),
                converged: res.converged,
            };
        }
        Ok(())
    })
}

/// Weighted ROF denoising of a `bins x angles` sinogram.
///
/// # Safety
/// `cfg` must be valid; `sino` and `out` must hold `bins * angles` doubles;
/// `info` may be null.
#[no_mangle]
pub unsafe extern "C" fn sinotv_sinogram_rof(
    cfg: *const SinotvRofConfig,
    bins: usize,
    angles: usize,
    angle_step_deg: f64,
    sino: *const f64,
    out: *mut f64,
    info: *mut SinotvSolveInfo,
) -> SinotvStatus {
    guard(|| {
        let cfg: RofConfig = (*cfg.as_ref().ok_or_else(|| null("cfg"))?).into();
        let n = sinogram_shape(bins, angles)?;
        let g = input(sino, n, n, "sino")?;
        let out = output(out, n, n, "out")?;
        let sinogram = bare_sinogram(row_major((bins, angles), g), angle_step_deg);
        let res = sinogram_rof(&sinogram, &cfg)?;
        copy_out(&res.sinogram.data, out);
        if let Some(info) = info.as_mut() {
            *info = SinotvSolveInfo {
                iterations: res.iterations,
                converged: res.converged,
            };
        }
        Ok(())
    })
}

/// Closed-form ROF solution for the sinogram of a disc of radius `r`: the
/// plateau half-width `kappa` and height `delta`.
///
/// # Safety
/// `kappa` and `delta` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sinotv_solve_kappa(r: f64, beta: f64, kappa: *mut f64, delta: *mut f64) -> SinotvStatus {
    guard(|| {
        let (k, d) = (kappa.as_mut().ok_or_else(|| null("kappa"))?, delta.as_mut().ok_or_else(|| null("delta"))?);
        let res = sinotv::oracle::solve_kappa(r, beta, None)?;
        *k = res.kappa;
        *d = res.delta;
        Ok(())
    })
}

/// `20 log10(||truth|| / ||truth - rec||)` over `len` values.
///
/// # Safety
/// `truth` and `rec` must hold `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sinotv_snr_db(truth: *const f64, rec: *const f64, len: usize, out: *mut f64) -> SinotvStatus {
    guard(|| {
        let t = input(truth, len, len, "truth")?;
        let r = input(rec, len, len, "rec")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = sinotv::metrics::snr_db(&row_major((len, 1), t), &row_major((len, 1), r))?;
        Ok(())
    })
}

/// Poisson noise with `mean_counts_at_max` expected counts in the hottest
/// entry. The same seed and layout give the same output on every platform.
///
/// # Safety
/// `sino` and `out` must hold `bins * angles` doubles.
#[no_mangle]
pub unsafe extern "C" fn sinotv_apply_poisson(
    bins: usize,
    angles: usize,
    sino: *const f64,
    mean_counts_at_max: f64,
    seed: u64,
    out: *mut f64,
) -> SinotvStatus {
    guard(|| {
        let n = sinogram_shape(bins, angles)?;
        let g = input(sino, n, n, "sino")?;
        let out = output(out, n, n, "out")?;
        let sinogram = bare_sinogram(row_major((bins, angles), g), 1.0);
        let noisy = apply_poisson(&sinogram, &NoiseModel::new(mean_counts_at_max, seed)?)?;
        copy_out(&noisy.data, out);
        Ok(())
    })
}

//! Thin safe wrappers over the system BLAS/LAPACK.
//!
//! Only the handful of dense kernels the optimizer leans on: GEMM, Cholesky
//! factorization and triangular solves, symmetric inverse from a Cholesky
//! factor, and symmetric eigendecomposition. Everything works on standard
//! (row-major) `ndarray` arrays; the column-major conversion is done by the
//! usual transpose identities rather than by copying.
//!
//! A row-major matrix read column-major is its transpose, so:
//! * `dpotrf(uplo = 'U')` on a row-major symmetric buffer writes our
//!   lower-triangular factor `L` with `L Lᵀ = A`,
//! * `C = op(A)·op(B)` row-major is `dgemm` with the operands swapped,
//! * triangular solves flip to the `side = 'R'` forms.

use ndarray::prelude::*;
use ndarray::CowArray;

use crate::error::{Error, Result};

extern "C" {
    fn openblas_set_num_threads(n: i32);
    fn dgemm_(
        transa: *const u8,
        transb: *const u8,
        m: *const i32,
        n: *const i32,
        k: *const i32,
        alpha: *const f64,
        a: *const f64,
        lda: *const i32,
        b: *const f64,
        ldb: *const i32,
        beta: *const f64,
        c: *mut f64,
        ldc: *const i32,
    );
    fn dpotrf_(uplo: *const u8, n: *const i32, a: *mut f64, lda: *const i32, info: *mut i32);
    fn dpotri_(uplo: *const u8, n: *const i32, a: *mut f64, lda: *const i32, info: *mut i32);
    fn dtrsm_(
        side: *const u8,
        uplo: *const u8,
        transa: *const u8,
        diag: *const u8,
        m: *const i32,
        n: *const i32,
        alpha: *const f64,
        a: *const f64,
        lda: *const i32,
        b: *mut f64,
        ldb: *const i32,
    );
    fn dsyevd_(
        jobz: *const u8,
        uplo: *const u8,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        w: *mut f64,
        work: *mut f64,
        lwork: *const i32,
        iwork: *mut i32,
        liwork: *const i32,
        info: *mut i32,
    );
}

/// Caps the BLAS internal thread pool. See [`crate::init`].
pub fn set_blas_threads(n: usize) {
    unsafe { openblas_set_num_threads(n.max(1) as i32) };
}

fn standard<'a>(a: ArrayView2<'a, f64>) -> CowArray<'a, f64, Ix2> {
    if a.is_standard_layout() {
        CowArray::from(a)
    } else {
        CowArray::from(a.to_owned())
    }
}

/// `C = alpha * op(A) op(B)`, row-major, with `ta`/`tb` selecting transposes.
pub fn gemm(ta: bool, tb: bool, alpha: f64, a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    let (am, ak) = if ta { (a.ncols(), a.nrows()) } else { (a.nrows(), a.ncols()) };
    let (bk, bn) = if tb { (b.ncols(), b.nrows()) } else { (b.nrows(), b.ncols()) };
    assert_eq!(ak, bk, "gemm: inner dimensions differ ({ak} vs {bk})");
    let a = standard(a.view());
    let b = standard(b.view());
    let mut c = Array2::<f64>::zeros((am, bn));
    if am == 0 || bn == 0 {
        return c;
    }
    if ak == 0 {
        return c;
    }
    // Row-major C (m×n) viewed column-major is Cᵀ = op(B)ᵀ op(A)ᵀ, so swap
    // the operands and keep the transpose flags.
    let m = bn as i32;
    let n = am as i32;
    let k = ak as i32;
    let beta = 0.0;
    let ta_c: &[u8; 1] = if ta { b"T" } else { b"N" };
    let tb_c: &[u8; 1] = if tb { b"T" } else { b"N" };
    let lda_b = b.ncols() as i32;
    let lda_a = a.ncols() as i32;
    unsafe {
        dgemm_(
            tb_c.as_ptr(),
            ta_c.as_ptr(),
            &m,
            &n,
            &k,
            &alpha,
            b.as_ptr(),
            &lda_b,
            a.as_ptr(),
            &lda_a,
            &beta,
            c.as_mut_ptr(),
            &m,
        );
    }
    c
}

/// `A·B` for row-major arrays.
pub fn matmul(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    gemm(false, false, 1.0, a, b)
}

/// `Aᵀ·B` for row-major arrays.
pub fn matmul_tn(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    gemm(true, false, 1.0, a, b)
}

/// `A·Bᵀ` for row-major arrays.
pub fn matmul_nt(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    gemm(false, true, 1.0, a, b)
}

/// Cholesky factor `L` (lower triangular, `L Lᵀ = A + shift·I`).
///
/// `A` must be symmetric; only its lower triangle is read. Returns
/// [`Error::Factorization`] when the shifted matrix is not positive definite.
pub fn cholesky_lower(a: &ArrayView2<f64>, shift: f64) -> Result<Array2<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "cholesky: matrix must be square");
    let mut buf = a.to_owned();
    if !buf.is_standard_layout() {
        buf = Array2::from_shape_vec((n, n), buf.iter().copied().collect()).unwrap();
    }
    if shift != 0.0 {
        for i in 0..n {
            buf[[i, i]] += shift;
        }
    }
    let ni = n as i32;
    let mut info = 0i32;
    unsafe { dpotrf_(b"U".as_ptr(), &ni, buf.as_mut_ptr(), &ni, &mut info) };
    if info != 0 {
        return Err(Error::Factorization {
            context: "cholesky",
            order: n,
            reg: shift,
        });
    }
    for i in 0..n {
        for j in (i + 1)..n {
            buf[[i, j]] = 0.0;
        }
    }
    Ok(buf)
}

/// Solves `L X = B` (or `Lᵀ X = B` with `transpose`) in place over `B`,
/// where `L` is a lower-triangular factor from [`cholesky_lower`].
pub fn solve_lower_inplace(l: &ArrayView2<f64>, b: &mut Array2<f64>, transpose: bool) {
    let n = l.nrows();
    assert_eq!(n, l.ncols());
    assert_eq!(n, b.nrows(), "triangular solve: dimension mismatch");
    assert!(b.is_standard_layout());
    let m = b.ncols();
    if m == 0 || n == 0 {
        return;
    }
    let l = standard(l.view());
    // Row-major L is column-major upper; X L-equations flip to side='R'.
    let mi = m as i32;
    let ni = n as i32;
    let alpha = 1.0;
    let trans: &[u8; 1] = if transpose { b"T" } else { b"N" };
    unsafe {
        dtrsm_(
            b"R".as_ptr(),
            b"U".as_ptr(),
            trans.as_ptr(),
            b"N".as_ptr(),
            &mi,
            &ni,
            &alpha,
            l.as_ptr(),
            &ni,
            b.as_mut_ptr(),
            &mi,
        );
    }
}

/// Solves the positive-definite system `A X = B` given `l = cholesky_lower(A)`.
pub fn solve_with_cholesky(l: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    let mut x = b.to_owned();
    if !x.is_standard_layout() {
        x = Array2::from_shape_vec((b.nrows(), b.ncols()), b.iter().copied().collect()).unwrap();
    }
    solve_lower_inplace(l, &mut x, false);
    solve_lower_inplace(l, &mut x, true);
    x
}

/// Full symmetric inverse `A⁻¹` from the Cholesky factor `L` of `A`.
pub fn inverse_from_cholesky(l: &ArrayView2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut buf = l.to_owned();
    if !buf.is_standard_layout() {
        buf = Array2::from_shape_vec((n, n), buf.iter().copied().collect()).unwrap();
    }
    let ni = n as i32;
    let mut info = 0i32;
    unsafe { dpotri_(b"U".as_ptr(), &ni, buf.as_mut_ptr(), &ni, &mut info) };
    debug_assert_eq!(info, 0, "dpotri on a valid factor cannot fail");
    // The inverse lands in our lower triangle; mirror it.
    for i in 0..n {
        for j in (i + 1)..n {
            buf[[i, j]] = buf[[j, i]];
        }
    }
    buf
}

/// Eigendecomposition of a symmetric matrix.
///
/// Returns eigenvalues in ascending order and the matrix whose column `q`
/// is the unit eigenvector for eigenvalue `q`.
pub fn eigh_ascending(a: &ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "eigh: matrix must be square");
    if n == 0 {
        return Ok((Array1::zeros(0), Array2::zeros((0, 0))));
    }
    let mut buf = a.to_owned();
    if !buf.is_standard_layout() {
        buf = Array2::from_shape_vec((n, n), buf.iter().copied().collect()).unwrap();
    }
    let ni = n as i32;
    let mut w = Array1::<f64>::zeros(n);
    let lwork = (1 + 6 * n + 2 * n * n) as i32;
    let mut work = vec![0.0f64; lwork as usize];
    let liwork = (3 + 5 * n) as i32;
    let mut iwork = vec![0i32; liwork as usize];
    let mut info = 0i32;
    unsafe {
        dsyevd_(
            b"V".as_ptr(),
            b"U".as_ptr(),
            &ni,
            buf.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Eigen(info));
    }
    // LAPACK returns eigenvectors as column-major columns, i.e. our rows.
    Ok((w, buf.t().to_owned()))
}

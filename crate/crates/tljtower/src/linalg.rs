//! Dense helpers over complex matrices with real fast paths.
//!
//! Every tower built from a graph is real, so products first check whether
//! both factors have vanishing imaginary parts and fall back to a single real
//! gemm in that case.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn is_real(m: &CMat) -> bool {
    m.iter().all(|z| z.im == 0.0)
}

pub fn re_part(m: &CMat) -> DMatrix<f64> {
    m.map(|z| z.re)
}

pub fn im_part(m: &CMat) -> DMatrix<f64> {
    m.map(|z| z.im)
}

pub fn to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(c)
}

fn combine(re: DMatrix<f64>, im: DMatrix<f64>) -> CMat {
    re.zip_map(&im, C64::new)
}

/// Matrix product routed through real gemm.
pub fn cmul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.nrows(), "cmul shape mismatch");
    if a.nrows() == 0 || b.ncols() == 0 || a.ncols() == 0 {
        return CMat::zeros(a.nrows(), b.ncols());
    }
    let (ar, br) = (is_real(a), is_real(b));
    let a_re = re_part(a);
    let b_re = re_part(b);
    match (ar, br) {
        (true, true) => to_complex(&(&a_re * &b_re)),
        (true, false) => {
            let b_im = im_part(b);
            combine(&a_re * &b_re, &a_re * &b_im)
        }
        (false, true) => {
            let a_im = im_part(a);
            combine(&a_re * &b_re, &a_im * &b_re)
        }
        (false, false) => {
            let a_im = im_part(a);
            let b_im = im_part(b);
            combine(&a_re * &b_re - &a_im * &b_im, &a_re * &b_im + &a_im * &b_re)
        }
    }
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0f64, |acc, z| {
        let n = z.norm();
        if n.is_nan() || acc.is_nan() {
            f64::NAN
        } else {
            acc.max(n)
        }
    })
}

/// Singular values, computed in real arithmetic when possible.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    if is_real(m) {
        re_part(m).singular_values().iter().copied().collect()
    } else {
        m.clone().singular_values().iter().copied().collect()
    }
}

/// Numerical rank: singular values at least `tol * max(1, sigma_max)`.
pub fn rank(m: &CMat, tol: f64) -> usize {
    let sv = singular_values(m);
    let top = sv.iter().copied().fold(0.0, f64::max).max(1.0);
    sv.iter().filter(|&&s| s >= tol * top).count()
}

/// Orthonormal basis (as columns) of the null space of `m`.
pub fn nullspace(m: &CMat, tol: f64) -> CMat {
    let cols = m.ncols();
    if cols == 0 {
        return CMat::zeros(0, 0);
    }
    let rows = m.nrows().max(cols);
    let mut padded = CMat::zeros(rows, cols);
    padded.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
    let scale = max_abs(m).max(1.0);
    if is_real(&padded) {
        let svd = SVD::new(re_part(&padded), false, true);
        let vt = svd.v_t.expect("v_t requested");
        let keep: Vec<usize> =
            (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] < tol * scale).collect();
        let mut out = CMat::zeros(cols, keep.len());
        for (k, &i) in keep.iter().enumerate() {
            for j in 0..cols {
                out[(j, k)] = c(vt[(i, j)]);
            }
        }
        out
    } else {
        let svd = SVD::new(padded, false, true);
        let vt = svd.v_t.expect("v_t requested");
        let keep: Vec<usize> =
            (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] < tol * scale).collect();
        let mut out = CMat::zeros(cols, keep.len());
        for (k, &i) in keep.iter().enumerate() {
            for j in 0..cols {
                out[(j, k)] = vt[(i, j)].conj();
            }
        }
        out
    }
}

/// Eigen-decomposition of a Hermitian matrix: (eigenvalues, eigenvectors as columns).
pub fn hermitian_eigen(h: &CMat) -> (Vec<f64>, CMat) {
    let n = h.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let sym = (h + h.adjoint()).scale(0.5);
    if is_real(&sym) {
        let e = SymmetricEigen::new(re_part(&sym));
        (e.eigenvalues.iter().copied().collect(), to_complex(&e.eigenvectors))
    } else {
        let e = SymmetricEigen::new(sym);
        (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
    }
}

/// Pseudo-inverse square root of a positive semidefinite matrix.
pub fn psd_inv_sqrt(h: &CMat, tol: f64) -> CMat {
    let (vals, vecs) = hermitian_eigen(h);
    let top = vals.iter().copied().fold(0.0, f64::max).max(1e-300);
    let n = h.nrows();
    let mut scaled = vecs.clone();
    for (k, &v) in vals.iter().enumerate() {
        let f = if v > tol * top.max(1.0) { 1.0 / v.sqrt() } else { 0.0 };
        for i in 0..n {
            scaled[(i, k)] *= c(f);
        }
    }
    cmul(&scaled, &vecs.adjoint())
}

/// Orthonormal columns spanning the range of a projection.
pub fn projection_range(p: &CMat) -> CMat {
    let (vals, vecs) = hermitian_eigen(p);
    let keep: Vec<usize> = (0..vals.len()).filter(|&k| vals[k] > 0.5).collect();
    let mut out = CMat::zeros(p.nrows(), keep.len());
    for (j, &k) in keep.iter().enumerate() {
        out.set_column(j, &vecs.column(k));
    }
    if is_real(&out) {
        // Fix a sign convention so that results are deterministic.
        for j in 0..out.ncols() {
            let col = out.column(j);
            let pivot = col.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or(c(1.0));
            if pivot.re < 0.0 {
                let neg: DVector<C64> = -col.clone_owned();
                out.set_column(j, &neg);
            }
        }
    }
    out
}

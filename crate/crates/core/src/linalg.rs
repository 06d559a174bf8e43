//! Dense complex linear algebra shared by every module, plus the global
//! numerical policy.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Relative tolerance for identity checks.
pub const EPS_NUM: f64 = 1e-9;
/// Singular values below `RANK_CUTOFF * sigma_max` count as zero.
pub const RANK_CUTOFF: f64 = 1e-10;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5)
}

fn to_faer(m: &CMat) -> faer::Mat<C64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, C64>) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Eigenvalues (ascending) and eigenvectors (as columns) of a Hermitian matrix.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    if m.nrows() == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let eig = to_faer(&hermitian_part(m)).self_adjoint_eigen(faer::Side::Lower).expect("Hermitian eigendecomposition");
    let vals = eig.S().column_vector().iter().map(|z| z.re).collect();
    (vals, from_faer(eig.U()))
}

/// Thin SVD `m = U diag(s) V*`, singular values in nonincreasing order.
pub fn svd(m: &CMat) -> (CMat, Vec<f64>, CMat) {
    let svd = to_faer(m).thin_svd().expect("singular value decomposition");
    let s = svd.S().column_vector().iter().map(|z| z.re).collect();
    (from_faer(svd.U()), s, from_faer(svd.V()))
}

fn singular_values(m: &CMat) -> Vec<f64> {
    to_faer(m).singular_values().expect("singular values")
}

/// Applies `f` to the spectrum of the Hermitian part of `m`.
pub fn hermitian_fn(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = eigh(m);
    let d = CMat::from_diagonal(&DVector::from_iterator(vals.len(), vals.iter().map(|&v| c(f(v)))));
    &vecs * d * vecs.adjoint()
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    eigh(m).0.first().copied().unwrap_or(0.0)
}

pub fn spectral_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m).into_iter().fold(0.0, f64::max)
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_norm(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Orthonormalizes `vectors` in order (two-pass Gram–Schmidt), dropping
/// those whose residual falls under the rank cutoff.
pub fn orthonormal_span(vectors: &[CVec]) -> Vec<CVec> {
    let scale = vectors.iter().map(vec_norm).fold(0.0, f64::max);
    if scale == 0.0 {
        return Vec::new();
    }
    let mut basis: Vec<CVec> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let p = b.dotc(&w);
                w -= b * p;
            }
        }
        let n = vec_norm(&w);
        if n > 1e-8 * scale.max(1e-300) {
            basis.push(w / c(n));
        }
    }
    basis
}

/// Numerical rank of a set of vectors.
pub fn span_rank(vectors: &[CVec]) -> usize {
    if vectors.is_empty() {
        return 0;
    }
    let m = columns(vectors);
    let sv = singular_values(&m);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_CUTOFF.max(1e-9) * smax).count()
}

pub fn columns(vectors: &[CVec]) -> CMat {
    let n = vectors.first().map(|v| v.len()).unwrap_or(0);
    let mut m = CMat::zeros(n, vectors.len());
    for (j, v) in vectors.iter().enumerate() {
        m.set_column(j, v);
    }
    m
}

/// Orthonormal basis of the kernel of `a`.
pub fn nullspace(a: &CMat) -> Vec<CVec> {
    let cols = a.ncols();
    if cols == 0 {
        return Vec::new();
    }
    let svd = to_faer(a).svd().expect("singular value decomposition");
    let s: Vec<f64> = svd.S().column_vector().iter().map(|z| z.re).collect();
    let smax = s.iter().copied().fold(1.0, f64::max);
    let v = from_faer(svd.V());
    (0..cols).filter(|&i| s.get(i).is_none_or(|&x| x <= 1e-9 * smax)).map(|i| v.column(i).into_owned()).collect()
}

/// `V diag(1/s) U*` over singular values above the global rank cutoff.
pub fn pinv(a: &CMat) -> CMat {
    if a.is_empty() {
        return CMat::zeros(a.ncols(), a.nrows());
    }
    let (u, s, v) = svd(a);
    let cut = (RANK_CUTOFF * s[0]).max(1e-300);
    let mut scaled = v;
    for (k, &x) in s.iter().enumerate() {
        let w = if x > cut { 1.0 / x } else { 0.0 };
        scaled.column_mut(k).scale_mut(w);
    }
    scaled * u.adjoint()
}

/// Minimum-norm least-squares solution of `a x = b`; returns `(x, residual)`.
pub fn lstsq(a: &CMat, b: &CMat) -> (CMat, f64) {
    if a.ncols() == 0 {
        return (CMat::zeros(0, b.ncols()), frobenius(b));
    }
    let x = pinv(a) * b;
    let r = frobenius(&(a * &x - b));
    (x, r)
}

pub fn random_complex<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| random_complex(rng))
}

pub fn random_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| random_complex(rng))
}

/// Flattens a square matrix row-major.
pub fn vectorize(m: &CMat) -> CVec {
    let (r, cols) = m.shape();
    CVec::from_fn(r * cols, |k, _| m[(k / cols, k % cols)])
}

pub fn unvectorize(v: &CVec, n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| v[i * n + j])
}

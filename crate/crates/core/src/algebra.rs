//! Finite-dimensional von Neumann algebras as direct sums of full matrix
//! blocks.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec, C64};

/// `M_{n_1} ⊕ … ⊕ M_{n_a}`. Block order is part of the data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiMatrixAlgebra {
    block_dims: Vec<usize>,
    label: String,
}

pub fn make_algebra(block_dims: &[usize], label: &str) -> Result<Arc<MultiMatrixAlgebra>> {
    MultiMatrixAlgebra::new(block_dims, label).map(Arc::new)
}

impl MultiMatrixAlgebra {
    pub fn new(block_dims: &[usize], label: &str) -> Result<Self> {
        if block_dims.is_empty() {
            return Err(Error::InvalidAlgebra("empty block list".into()));
        }
        if let Some(k) = block_dims.iter().position(|&n| n == 0) {
            return Err(Error::InvalidAlgebra(format!("block {k} has dimension zero")));
        }
        Ok(Self { block_dims: block_dims.to_vec(), label: label.to_string() })
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn num_blocks(&self) -> usize {
        self.block_dims.len()
    }

    /// Σ nᵢ².
    pub fn dim(&self) -> usize {
        self.block_dims.iter().map(|n| n * n).sum()
    }

    /// Σ nᵢ, the size of the defining representation.
    pub fn total_size(&self) -> usize {
        self.block_dims.iter().sum()
    }

    /// Coordinate index of the matrix unit `e^{(block)}_{ij}`.
    pub fn unit_index(&self, block: usize, i: usize, j: usize) -> usize {
        let offset: usize = self.block_dims[..block].iter().map(|n| n * n).sum();
        offset + i * self.block_dims[block] + j
    }

    /// Inverse of [`unit_index`](Self::unit_index).
    pub fn unit_of_index(&self, mut idx: usize) -> (usize, usize, usize) {
        for (k, &n) in self.block_dims.iter().enumerate() {
            if idx < n * n {
                return (k, idx / n, idx % n);
            }
            idx -= n * n;
        }
        panic!("coordinate index out of range")
    }

    pub fn is_abelian(&self) -> bool {
        self.block_dims.iter().all(|&n| n == 1)
    }
}

impl fmt::Display for MultiMatrixAlgebra {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:?}", self.label, self.block_dims)
    }
}

/// An element stored block by block.
#[derive(Debug, Clone)]
pub struct AlgebraElement {
    algebra: Arc<MultiMatrixAlgebra>,
    blocks: Vec<CMat>,
}

impl AlgebraElement {
    pub fn from_blocks(algebra: &Arc<MultiMatrixAlgebra>, blocks: Vec<CMat>) -> Result<Self> {
        if blocks.len() != algebra.num_blocks() {
            return Err(Error::InvalidAlgebra(format!(
                "expected {} blocks, got {}",
                algebra.num_blocks(),
                blocks.len()
            )));
        }
        for (k, (b, &n)) in blocks.iter().zip(algebra.block_dims()).enumerate() {
            if b.nrows() != n || b.ncols() != n {
                return Err(Error::InvalidAlgebra(format!(
                    "block {k} has shape {:?}, expected {n}x{n}",
                    b.shape()
                )));
            }
        }
        Ok(Self { algebra: algebra.clone(), blocks })
    }

    pub fn zero(algebra: &Arc<MultiMatrixAlgebra>) -> Self {
        let blocks = algebra.block_dims().iter().map(|&n| CMat::zeros(n, n)).collect();
        Self { algebra: algebra.clone(), blocks }
    }

    pub fn identity(algebra: &Arc<MultiMatrixAlgebra>) -> Self {
        let blocks = algebra.block_dims().iter().map(|&n| CMat::identity(n, n)).collect();
        Self { algebra: algebra.clone(), blocks }
    }

    pub fn matrix_unit(algebra: &Arc<MultiMatrixAlgebra>, block: usize, i: usize, j: usize) -> Self {
        let mut x = Self::zero(algebra);
        x.blocks[block][(i, j)] = c(1.0);
        x
    }

    /// Block-scalar element `Σ z_k 1_k`.
    pub fn block_scalars(algebra: &Arc<MultiMatrixAlgebra>, scalars: &[C64]) -> Self {
        let blocks = algebra
            .block_dims()
            .iter()
            .zip(scalars)
            .map(|(&n, &z)| CMat::identity(n, n) * z)
            .collect();
        Self { algebra: algebra.clone(), blocks }
    }

    pub fn from_coords(algebra: &Arc<MultiMatrixAlgebra>, v: &CVec) -> Self {
        assert_eq!(v.len(), algebra.dim(), "coordinate length mismatch");
        let mut offset = 0;
        let blocks = algebra
            .block_dims()
            .iter()
            .map(|&n| {
                let b = CMat::from_fn(n, n, |i, j| v[offset + i * n + j]);
                offset += n * n;
                b
            })
            .collect();
        Self { algebra: algebra.clone(), blocks }
    }

    pub fn coords(&self) -> CVec {
        let mut out = Vec::with_capacity(self.algebra.dim());
        for b in &self.blocks {
            for i in 0..b.nrows() {
                for j in 0..b.ncols() {
                    out.push(b[(i, j)]);
                }
            }
        }
        CVec::from_vec(out)
    }

    pub fn random<R: Rng + ?Sized>(algebra: &Arc<MultiMatrixAlgebra>, rng: &mut R) -> Self {
        let blocks = algebra
            .block_dims()
            .iter()
            .map(|&n| linalg::random_matrix(rng, n, n))
            .collect();
        Self { algebra: algebra.clone(), blocks }
    }

    pub fn algebra(&self) -> &Arc<MultiMatrixAlgebra> {
        &self.algebra
    }

    pub fn blocks(&self) -> &[CMat] {
        &self.blocks
    }

    pub fn block(&self, k: usize) -> &CMat {
        &self.blocks[k]
    }

    fn check_same(&self, other: &Self) {
        assert!(
            self.algebra.block_dims == other.algebra.block_dims,
            "algebra mismatch: {} vs {}",
            self.algebra,
            other.algebra
        );
    }

    pub fn map_blocks(&self, f: impl Fn(&CMat) -> CMat) -> Self {
        Self { algebra: self.algebra.clone(), blocks: self.blocks.iter().map(f).collect() }
    }

    fn zip_blocks(&self, other: &Self, f: impl Fn(&CMat, &CMat) -> CMat) -> Self {
        self.check_same(other);
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| f(a, b)).collect();
        Self { algebra: self.algebra.clone(), blocks }
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_blocks(other, |a, b| a * b)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_blocks(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_blocks(other, |a, b| a - b)
    }

    pub fn scale(&self, z: C64) -> Self {
        self.map_blocks(|b| b * z)
    }

    pub fn adjoint(&self) -> Self {
        self.map_blocks(|b| b.adjoint())
    }

    /// C*-norm: the largest blockwise spectral norm.
    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(linalg::spectral_norm).fold(0.0, f64::max)
    }

    pub fn hermitian_residual(&self) -> f64 {
        self.sub(&self.adjoint()).norm()
    }

    /// Functional calculus on the Hermitian part, block by block.
    pub fn hermitian_fn(&self, f: impl Fn(f64) -> f64 + Copy) -> Self {
        self.map_blocks(|b| linalg::hermitian_fn(b, f))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks.iter().map(linalg::min_eigenvalue).fold(f64::INFINITY, f64::min)
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).sub(&other.mul(self))
    }

    /// Positivity test with a per-block minimal-eigenvalue certificate.
    pub fn is_positive(&self, eps: f64) -> Result<PositivityCertificate> {
        let scale = self.norm().max(1.0);
        let res = self.hermitian_residual();
        if res > eps * scale {
            return Err(Error::NotHermitian(res));
        }
        let min_eigs: Vec<f64> = self.blocks.iter().map(linalg::min_eigenvalue).collect();
        let min = min_eigs.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(PositivityCertificate { positive: min >= -eps * scale, min_eigenvalue: min, block_min_eigenvalues: min_eigs })
    }

    /// Inverse of a positive invertible element; refuses below the rank cutoff.
    pub fn positive_inverse(&self) -> Result<Self> {
        self.positive_power(-1.0)
    }

    pub fn positive_sqrt(&self) -> Result<Self> {
        self.positive_power(0.5)
    }

    pub fn positive_power(&self, p: f64) -> Result<Self> {
        let min = self.min_eigenvalue();
        let cutoff = linalg::RANK_CUTOFF * self.norm().max(1e-300);
        if min <= cutoff {
            return Err(Error::Degenerate(format!(
                "element not positive invertible (min eigenvalue {min:.3e})"
            )));
        }
        Ok(self.hermitian_fn(move |x| x.powf(p)))
    }

    /// If the element is block-scalar returns the scalars, else `None`.
    pub fn as_block_scalars(&self, tol: f64) -> Option<Vec<C64>> {
        let mut out = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let n = b.nrows();
            let z = b.trace() / c(n as f64);
            let dev = linalg::spectral_norm(&(b - CMat::identity(n, n) * z));
            if dev > tol {
                return None;
            }
            out.push(z);
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositivityCertificate {
    pub positive: bool,
    pub min_eigenvalue: f64,
    pub block_min_eigenvalues: Vec<f64>,
}

/// Weights `s_k > 0` defining `Tr_s(x) = Σ s_k Tr(x_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceVector {
    weights: Vec<f64>,
}

impl TraceVector {
    pub fn new(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|&w| !w.is_finite() || w <= 0.0) {
            return Err(Error::InvalidAlgebra(format!("trace weights must be positive: {weights:?}")));
        }
        Ok(Self { weights: weights.to_vec() })
    }

    pub fn uniform(algebra: &MultiMatrixAlgebra) -> Self {
        Self { weights: vec![1.0; algebra.num_blocks()] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Coordinate weight of the matrix unit basis (diagonal of the Gram form).
    pub fn coordinate_weights(&self, algebra: &MultiMatrixAlgebra) -> Vec<f64> {
        algebra
            .block_dims()
            .iter()
            .zip(&self.weights)
            .flat_map(|(&n, &w)| std::iter::repeat_n(w, n * n))
            .collect()
    }
}

pub fn trace_eval(s: &TraceVector, x: &AlgebraElement) -> Result<C64> {
    if s.weights.len() != x.algebra.num_blocks() {
        return Err(Error::AlgebraMismatch {
            expected: format!("{} trace weights", x.algebra.num_blocks()),
            got: format!("{}", s.weights.len()),
        });
    }
    Ok(x.blocks.iter().zip(&s.weights).map(|(b, &w)| b.trace() * c(w)).sum())
}

/// Unweighted trace `Σ Tr(x_k)`.
pub fn trace(x: &AlgebraElement) -> C64 {
    x.blocks.iter().map(|b| b.trace()).sum()
}

/// One scalar per block; lives in the center.
#[derive(Debug, Clone)]
pub struct CentralElement {
    algebra: Arc<MultiMatrixAlgebra>,
    scalars: Vec<C64>,
}

impl CentralElement {
    pub fn new(algebra: &Arc<MultiMatrixAlgebra>, scalars: Vec<C64>) -> Result<Self> {
        if scalars.len() != algebra.num_blocks() {
            return Err(Error::InvalidAlgebra(format!(
                "central element needs {} scalars, got {}",
                algebra.num_blocks(),
                scalars.len()
            )));
        }
        Ok(Self { algebra: algebra.clone(), scalars })
    }

    pub fn from_real(algebra: &Arc<MultiMatrixAlgebra>, values: &[f64]) -> Result<Self> {
        Self::new(algebra, values.iter().map(|&v| c(v)).collect())
    }

    /// Reads off block scalars from an element that is central within `tol`.
    pub fn from_element(x: &AlgebraElement, tol: f64) -> Result<Self> {
        let scalars = x.as_block_scalars(tol).ok_or_else(|| {
            Error::Tolerance(format!("element is not central within {tol:.1e}"))
        })?;
        Ok(Self { algebra: x.algebra.clone(), scalars })
    }

    pub fn algebra(&self) -> &Arc<MultiMatrixAlgebra> {
        &self.algebra
    }

    pub fn scalars(&self) -> &[C64] {
        &self.scalars
    }

    pub fn real_values(&self) -> Vec<f64> {
        self.scalars.iter().map(|z| z.re).collect()
    }

    pub fn to_element(&self) -> AlgebraElement {
        AlgebraElement::block_scalars(&self.algebra, &self.scalars)
    }

    pub fn max_abs(&self) -> f64 {
        self.scalars.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Basis of `Z(A)`: the block units.
pub fn center_of(algebra: &Arc<MultiMatrixAlgebra>) -> Vec<CentralElement> {
    (0..algebra.num_blocks())
        .map(|k| {
            let mut s = vec![c(0.0); algebra.num_blocks()];
            s[k] = c(1.0);
            CentralElement { algebra: algebra.clone(), scalars: s }
        })
        .collect()
}

/// The matrix-unit basis in coordinate order.
pub fn matrix_unit_basis(algebra: &Arc<MultiMatrixAlgebra>) -> Vec<AlgebraElement> {
    (0..algebra.dim())
        .map(|idx| {
            let (k, i, j) = algebra.unit_of_index(idx);
            AlgebraElement::matrix_unit(algebra, k, i, j)
        })
        .collect()
}

/// Elements of a C*-algebra as needed by the generic Pimsner–Popa and
/// expectation machinery. Implemented both for block elements and for plain
/// operators on a Hilbert space.
pub trait StarElement: Clone + Send + Sync {
    fn mul(&self, other: &Self) -> Self;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn scale(&self, z: C64) -> Self;
    fn adjoint(&self) -> Self;
    fn norm(&self) -> f64;
    fn hermitian_fn(&self, f: &dyn Fn(f64) -> f64) -> Self;
    fn zero_like(&self) -> Self;
    fn one_like(&self) -> Self;
    /// Flat coordinates in a fixed orthonormal (Hilbert–Schmidt) basis.
    fn flat(&self) -> CVec;
}

impl StarElement for AlgebraElement {
    fn mul(&self, other: &Self) -> Self {
        AlgebraElement::mul(self, other)
    }
    fn add(&self, other: &Self) -> Self {
        AlgebraElement::add(self, other)
    }
    fn sub(&self, other: &Self) -> Self {
        AlgebraElement::sub(self, other)
    }
    fn scale(&self, z: C64) -> Self {
        AlgebraElement::scale(self, z)
    }
    fn adjoint(&self) -> Self {
        AlgebraElement::adjoint(self)
    }
    fn norm(&self) -> f64 {
        AlgebraElement::norm(self)
    }
    fn hermitian_fn(&self, f: &dyn Fn(f64) -> f64) -> Self {
        self.map_blocks(|b| linalg::hermitian_fn(b, f))
    }
    fn zero_like(&self) -> Self {
        AlgebraElement::zero(&self.algebra)
    }
    fn one_like(&self) -> Self {
        AlgebraElement::identity(&self.algebra)
    }
    fn flat(&self) -> CVec {
        self.coords()
    }
}

impl StarElement for CMat {
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn scale(&self, z: C64) -> Self {
        self * z
    }
    fn adjoint(&self) -> Self {
        CMat::adjoint(self)
    }
    fn norm(&self) -> f64 {
        linalg::spectral_norm(self)
    }
    fn hermitian_fn(&self, f: &dyn Fn(f64) -> f64) -> Self {
        linalg::hermitian_fn(self, f)
    }
    fn zero_like(&self) -> Self {
        CMat::zeros(self.nrows(), self.ncols())
    }
    fn one_like(&self) -> Self {
        CMat::identity(self.nrows(), self.ncols())
    }
    fn flat(&self) -> CVec {
        linalg::vectorize(self)
    }
}

/// Relative residual helper: `‖a − b‖ / max(1, ‖b‖)`.
pub fn rel_residual<T: StarElement>(a: &T, b: &T) -> f64 {
    a.sub(b).norm() / b.norm().max(1.0)
}

#[cfg(test)]
mod tests {
    use crate::linalg::EPS_NUM;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn make_algebra_examples() {
        let m2 = make_algebra(&[2], "M2").unwrap();
        assert_eq!(m2.dim(), 4);
        let c2 = make_algebra(&[1, 1], "C2").unwrap();
        assert!(c2.is_abelian());
        assert_eq!(center_of(&c2).len(), c2.dim());
        let m23 = make_algebra(&[2, 3], "M2+M3").unwrap();
        assert_eq!(m23.dim(), 13);
        assert_eq!(center_of(&m23).len(), 2);
    }

    #[test]
    fn make_algebra_errors() {
        assert!(make_algebra(&[], "x").is_err());
        assert!(make_algebra(&[2, 0], "x").is_err());
    }

    #[test]
    fn center_matches_brute_force_commutation() {
        // Solve x u = u x for every matrix unit u and compare dimensions.
        let a = make_algebra(&[2, 3], "M2+M3").unwrap();
        let basis = matrix_unit_basis(&a);
        let d = a.dim();
        let mut rows = Vec::new();
        for u in &basis {
            let mut m = CMat::zeros(d, d);
            for (col, e) in basis.iter().enumerate() {
                m.set_column(col, &e.commutator(u).coords());
            }
            rows.push(m);
        }
        let mut stacked = CMat::zeros(d * rows.len(), d);
        for (k, m) in rows.iter().enumerate() {
            stacked.view_mut((k * d, 0), (d, d)).copy_from(m);
        }
        assert_eq!(linalg::nullspace(&stacked).len(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for z in center_of(&a) {
            for _ in 0..1000 {
                let x = AlgebraElement::random(&a, &mut rng);
                assert!(z.to_element().commutator(&x).norm() <= EPS_NUM * x.norm());
            }
        }
    }

    #[test]
    fn positivity_examples() {
        let m2 = make_algebra(&[2], "M2").unwrap();
        let one = AlgebraElement::identity(&m2);
        let cert = one.is_positive(EPS_NUM).unwrap();
        assert!(cert.positive);
        assert!((cert.min_eigenvalue - 1.0).abs() < 1e-12);
        let d = AlgebraElement::from_blocks(&m2, vec![CMat::from_diagonal(&CVec::from_vec(vec![c(1.0), c(-1.0)]))]).unwrap();
        let cert = d.is_positive(EPS_NUM).unwrap();
        assert!(!cert.positive);
        assert!((cert.min_eigenvalue + 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = AlgebraElement::random(&m2, &mut rng);
        assert!(x.adjoint().mul(&x).is_positive(EPS_NUM).unwrap().positive);
        let nh = AlgebraElement::matrix_unit(&m2, 0, 0, 1);
        assert!(matches!(nh.is_positive(EPS_NUM), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn trace_examples() {
        let m2 = make_algebra(&[2], "M2").unwrap();
        let s = TraceVector::uniform(&m2);
        assert_eq!(trace_eval(&s, &AlgebraElement::identity(&m2)).unwrap(), c(2.0));
        let m23 = make_algebra(&[2, 3], "M2+M3").unwrap();
        let s = TraceVector::uniform(&m23);
        assert_eq!(trace_eval(&s, &AlgebraElement::identity(&m23)).unwrap(), c(5.0));
        let c2 = make_algebra(&[1, 1], "C2").unwrap();
        let s = TraceVector::new(&[2.0, 1.0]).unwrap();
        assert_eq!(trace_eval(&s, &AlgebraElement::identity(&c2)).unwrap(), c(3.0));
        assert!(trace_eval(&s, &AlgebraElement::identity(&m2)).is_err());
    }

    #[test]
    fn star_and_trace_identities_on_random_elements() {
        let a = make_algebra(&[2, 3], "M2+M3").unwrap();
        let s = TraceVector::new(&[1.5, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = AlgebraElement::random(&a, &mut rng);
            let y = AlgebraElement::random(&a, &mut rng);
            let lhs = x.mul(&y).adjoint();
            let rhs = y.adjoint().mul(&x.adjoint());
            assert!(lhs.sub(&rhs).norm() <= EPS_NUM * lhs.norm());
            let n = x.norm();
            assert!((x.adjoint().mul(&x).norm() - n * n).abs() <= EPS_NUM * n * n);
            let t1 = trace_eval(&s, &x.mul(&y)).unwrap();
            let t2 = trace_eval(&s, &y.mul(&x)).unwrap();
            assert!((t1 - t2).norm() <= EPS_NUM * (1.0 + t1.norm()));
        }
    }

    #[test]
    fn coords_round_trip() {
        let a = make_algebra(&[1, 2], "C+M2").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = AlgebraElement::random(&a, &mut rng);
        let y = AlgebraElement::from_coords(&a, &x.coords());
        assert!(x.sub(&y).norm() == 0.0);
        assert_eq!(a.unit_of_index(a.unit_index(1, 1, 0)), (1, 1, 0));
    }
}

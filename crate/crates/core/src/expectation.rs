//! Conditional expectations `E: M → ι(N)`, stored as matrices on the
//! matrix-unit coordinates of `M`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::algebra::{matrix_unit_basis, AlgebraElement, TraceVector};
use crate::error::{Error, Result};
use crate::inclusion::Inclusion;
use crate::linalg::{self, c, CMat, CVec, EPS_NUM};

#[derive(Debug, Clone)]
pub struct ConditionalExpectation {
    inclusion: Arc<Inclusion>,
    map: CMat,
    h: AlgebraElement,
    reference: TraceVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpectationReport {
    pub unital: f64,
    pub idempotent: f64,
    pub range: f64,
    pub bimodular: f64,
    pub completely_positive: f64,
    /// Smallest eigenvalue of `x ↦ Tr(E(x*x))`; must be strictly positive.
    pub faithful_min_eigenvalue: f64,
}

impl ExpectationReport {
    pub fn max_residual(&self) -> f64 {
        [self.unital, self.idempotent, self.range, self.bimodular, self.completely_positive]
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn is_faithful(&self) -> bool {
        self.faithful_min_eigenvalue > linalg::RANK_CUTOFF
    }

    pub fn accepted(&self, tol: f64) -> bool {
        self.max_residual() <= tol && self.is_faithful()
    }

    /// Name of the first failing axiom, if any.
    pub fn first_failure(&self, tol: f64) -> Option<&'static str> {
        let checks = [
            ("unital", self.unital),
            ("idempotent", self.idempotent),
            ("range", self.range),
            ("bimodular", self.bimodular),
            ("completely positive", self.completely_positive),
        ];
        checks
            .into_iter()
            .find(|(_, r)| *r > tol)
            .map(|(n, _)| n)
            .or((!self.is_faithful()).then_some("faithful"))
    }
}

/// Matrix of `y ↦ x y` on coordinates.
pub fn left_multiplication(x: &AlgebraElement) -> CMat {
    let basis = matrix_unit_basis(x.algebra());
    let cols: Vec<CVec> = basis.iter().map(|u| x.mul(u).coords()).collect();
    linalg::columns(&cols)
}

/// Matrix of `y ↦ y x` on coordinates.
pub fn right_multiplication(x: &AlgebraElement) -> CMat {
    let basis = matrix_unit_basis(x.algebra());
    let cols: Vec<CVec> = basis.iter().map(|u| u.mul(x).coords()).collect();
    linalg::columns(&cols)
}

fn apply_matrix(map: &CMat, x: &AlgebraElement) -> AlgebraElement {
    AlgebraElement::from_coords(x.algebra(), &(map * x.coords()))
}

/// Orthogonal projection onto `ι(N)` for `⟨x, y⟩ = Tr_s(x* y)`.
fn trace_projection(inc: &Inclusion, s: &TraceVector) -> Result<CMat> {
    let m = inc.m();
    if s.weights().len() != m.num_blocks() {
        return Err(Error::AlgebraMismatch {
            expected: format!("trace vector with {} weights", m.num_blocks()),
            got: format!("{} weights", s.weights().len()),
        });
    }
    let w = CMat::from_diagonal(&CVec::from_iterator(
        m.dim(),
        s.coordinate_weights(m).into_iter().map(c),
    ));
    let b = inc.embedding_matrix();
    let gram = b.adjoint() * &w * b;
    let inv = gram
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("Gram matrix of ι(N) is singular".into()))?;
    Ok(b * inv * b.adjoint() * w)
}

pub fn trace_expectation(inc: &Arc<Inclusion>, s: &TraceVector) -> Result<ConditionalExpectation> {
    let map = trace_projection(inc, s)?;
    Ok(ConditionalExpectation {
        inclusion: inc.clone(),
        map,
        h: AlgebraElement::identity(inc.m()),
        reference: s.clone(),
    })
}

/// Matrix of `x ↦ E_τ(h^{1/2} x h^{1/2})` without any admissibility checks.
pub fn density_map(inc: &Inclusion, s: &TraceVector, h: &AlgebraElement) -> Result<CMat> {
    let p = trace_projection(inc, s)?;
    let root = h.hermitian_fn(|v| v.max(0.0).sqrt());
    let basis = matrix_unit_basis(inc.m());
    let cols: Vec<CVec> = basis.iter().map(|u| root.mul(u).mul(&root).coords()).collect();
    Ok(p * linalg::columns(&cols))
}

/// Largest commutator of `x` with the generators `ι(e^i_kl)`.
pub fn relative_commutant_residual(inc: &Inclusion, x: &AlgebraElement) -> f64 {
    matrix_unit_basis(inc.n())
        .iter()
        .map(|u| inc.apply(u).expect("N element").commutator(x).norm())
        .fold(0.0, f64::max)
}

pub fn from_density(inc: &Arc<Inclusion>, s: &TraceVector, h: &AlgebraElement) -> Result<ConditionalExpectation> {
    if h.algebra().block_dims() != inc.m().block_dims() {
        return Err(Error::AlgebraMismatch { expected: inc.m().to_string(), got: h.algebra().to_string() });
    }
    let scale = h.norm().max(1.0);
    let comm = relative_commutant_residual(inc, h);
    if comm > EPS_NUM * scale {
        return Err(Error::InvalidDensity(format!("h is not in ι(N)′∩M (commutator {comm:.3e})")));
    }
    let cert = h.is_positive(EPS_NUM * scale).map_err(|e| Error::InvalidDensity(e.to_string()))?;
    if cert.min_eigenvalue <= linalg::RANK_CUTOFF * scale {
        return Err(Error::InvalidDensity(format!(
            "h is not positive invertible (min eigenvalue {:.3e})",
            cert.min_eigenvalue
        )));
    }
    let tau = trace_projection(inc, s)?;
    let norm_res = apply_matrix(&tau, h).sub(&AlgebraElement::identity(inc.m())).norm();
    if norm_res > EPS_NUM * scale {
        return Err(Error::InvalidDensity(format!("E_τ(h) ≠ 1 (residual {norm_res:.3e})")));
    }
    let map = density_map(inc, s, h)?;
    Ok(ConditionalExpectation { inclusion: inc.clone(), map, h: h.clone(), reference: s.clone() })
}

/// `c⁻¹ h` with `c = E_τ(h)`, so that the result satisfies `E_τ(·) = 1`.
pub fn normalize_density(inc: &Inclusion, s: &TraceVector, h: &AlgebraElement) -> Result<AlgebraElement> {
    let tau = trace_projection(inc, s)?;
    let c_elem = apply_matrix(&tau, h);
    Ok(c_elem.positive_inverse()?.mul(h))
}

/// The normalized density `exp(a)` for Hermitian `a ∈ ι(N)′∩M`.
pub fn density_from_log(inc: &Inclusion, s: &TraceVector, a: &AlgebraElement) -> Result<AlgebraElement> {
    normalize_density(inc, s, &a.hermitian_fn(f64::exp))
}

/// A random admissible density `exp(a)`, with `a` Gaussian of width `spread`
/// on the Hermitian part of the relative commutant.
pub fn random_density<R: Rng + ?Sized>(
    inc: &Inclusion,
    s: &TraceVector,
    spread: f64,
    rng: &mut R,
) -> Result<AlgebraElement> {
    let mut a = AlgebraElement::zero(inc.m());
    for b in inc.hermitian_relative_commutant() {
        let r: f64 = rng.sample(StandardNormal);
        a = a.add(&b.scale(c(spread * r)));
    }
    density_from_log(inc, s, &a)
}

pub fn random_expectation<R: Rng + ?Sized>(
    inc: &Arc<Inclusion>,
    s: &TraceVector,
    spread: f64,
    rng: &mut R,
) -> Result<ConditionalExpectation> {
    let h = random_density(inc, s, spread, rng)?;
    from_density(inc, s, &h)
}

impl ConditionalExpectation {
    /// Wraps an explicit coordinate matrix after verifying the axioms and
    /// recovering its density.
    pub fn from_matrix(inc: &Arc<Inclusion>, s: &TraceVector, map: CMat) -> Result<Self> {
        let d = inc.m().dim();
        if map.shape() != (d, d) {
            return Err(Error::NotExpectation(format!("matrix must be {d}x{d}")));
        }
        let report = verify_map(inc, &map);
        if let Some(axiom) = report.first_failure(1e-8) {
            return Err(Error::NotExpectation(format!("{axiom} axiom fails: {report:?}")));
        }
        let h = solve_density_map(inc, s, &map)?;
        Ok(Self { inclusion: inc.clone(), map, h, reference: s.clone() })
    }

    pub fn inclusion(&self) -> &Arc<Inclusion> {
        &self.inclusion
    }

    pub fn matrix(&self) -> &CMat {
        &self.map
    }

    pub fn density(&self) -> &AlgebraElement {
        &self.h
    }

    pub fn reference(&self) -> &TraceVector {
        &self.reference
    }

    pub fn apply(&self, x: &AlgebraElement) -> AlgebraElement {
        apply_matrix(&self.map, x)
    }

    /// `ι⁻¹(E(x))`.
    pub fn to_n(&self, x: &AlgebraElement) -> Result<AlgebraElement> {
        self.inclusion.pull_back(&self.apply(x))
    }

    pub fn distance(&self, other: &Self) -> f64 {
        linalg::spectral_norm(&(&self.map - &other.map))
    }
}

pub fn verify_expectation(e: &ConditionalExpectation) -> ExpectationReport {
    verify_map(&e.inclusion, &e.map)
}

/// Axiom residuals of an arbitrary linear map on `M`.
pub fn verify_map(inc: &Inclusion, map: &CMat) -> ExpectationReport {
    let m = inc.m();
    let one = AlgebraElement::identity(m);
    let unital = apply_matrix(map, &one).sub(&one).norm();
    let idempotent = linalg::spectral_norm(&(map * map - map));

    let range_vecs: Vec<CVec> = inc.range_basis().iter().map(|x| x.coords()).collect();
    let q = linalg::columns(&range_vecs);
    let proj = &q * q.adjoint();
    let ident = CMat::identity(m.dim(), m.dim());
    let range = linalg::spectral_norm(&((&ident - &proj) * map))
        .max(linalg::spectral_norm(&(map * &proj - &proj)));

    let n_basis: Vec<AlgebraElement> =
        matrix_unit_basis(inc.n()).iter().map(|u| inc.apply(u).expect("N element")).collect();
    let m_basis = matrix_unit_basis(m);
    let images: Vec<AlgebraElement> = m_basis.iter().map(|u| apply_matrix(map, u)).collect();
    let mut bimodular: f64 = 0.0;
    for n1 in &n_basis {
        for n2 in &n_basis {
            for (u, eu) in m_basis.iter().zip(&images) {
                let lhs = apply_matrix(map, &n1.mul(u).mul(n2));
                bimodular = bimodular.max(lhs.sub(&n1.mul(eu).mul(n2)).norm());
            }
        }
    }

    let mut cp_min: f64 = f64::INFINITY;
    for (k, &mk) in m.block_dims().iter().enumerate() {
        for (l, &ml) in m.block_dims().iter().enumerate() {
            let mut choi = CMat::zeros(mk * ml, mk * ml);
            for i in 0..mk {
                for j in 0..mk {
                    let img = &images[m.unit_index(k, i, j)];
                    choi.view_mut((i * ml, j * ml), (ml, ml)).copy_from(img.block(l));
                }
            }
            cp_min = cp_min.min(linalg::min_eigenvalue(&choi));
        }
    }
    let completely_positive = (-cp_min).max(0.0);

    let d = m.dim();
    let mut gram = CMat::zeros(d, d);
    for (a, ua) in m_basis.iter().enumerate() {
        for (b, ub) in m_basis.iter().enumerate() {
            gram[(a, b)] = crate::algebra::trace(&apply_matrix(map, &ua.adjoint().mul(ub)));
        }
    }
    let faithful_min_eigenvalue = linalg::min_eigenvalue(&gram);

    ExpectationReport { unital, idempotent, range, bimodular, completely_positive, faithful_min_eigenvalue }
}

/// Basis of `{x : E(x m) = E(x) E(m) for all m}`.
pub fn multiplicative_domain(e: &ConditionalExpectation) -> Vec<AlgebraElement> {
    let m = e.inclusion.m();
    let d = m.dim();
    let basis = matrix_unit_basis(m);
    let images: Vec<AlgebraElement> = basis.iter().map(|u| e.apply(u)).collect();
    let mut system = CMat::zeros(d * d, d);
    for (r, (mb, emb)) in basis.iter().zip(&images).enumerate() {
        for (col, (x, ex)) in basis.iter().zip(&images).enumerate() {
            let v = e.apply(&x.mul(mb)).sub(&ex.mul(emb)).coords();
            system.view_mut((r * d, col), (d, 1)).copy_from(&v);
        }
    }
    linalg::nullspace(&system).iter().map(|v| AlgebraElement::from_coords(m, v)).collect()
}

pub fn solve_density(e: &ConditionalExpectation) -> Result<AlgebraElement> {
    solve_density_map(&e.inclusion, &e.reference, &e.map)
}

/// The `h ∈ ι(N)′∩M` with `E = E_h`, by a linear solve over a basis of the
/// relative commutant (`E_h(x) = E_τ(h x)` is linear in `h`).
pub fn solve_density_map(inc: &Inclusion, s: &TraceVector, map: &CMat) -> Result<AlgebraElement> {
    let m = inc.m();
    let tau = trace_projection(inc, s)?;
    let rc = inc.relative_commutant();
    let basis = matrix_unit_basis(m);
    let d = m.dim();
    let mut a = CMat::zeros(d * d, rc.len());
    let mut rhs = CMat::zeros(d * d, 1);
    for (r, u) in basis.iter().enumerate() {
        for (col, b) in rc.iter().enumerate() {
            let v = &tau * b.mul(u).coords();
            a.view_mut((r * d, col), (d, 1)).copy_from(&v);
        }
        rhs.view_mut((r * d, 0), (d, 1)).copy_from(&(map * u.coords()));
    }
    let (coef, res) = linalg::lstsq(&a, &rhs);
    let scale = linalg::frobenius(&rhs).max(1.0);
    if res > 1e-8 * scale {
        return Err(Error::Inconsistent(res));
    }
    let mut h = AlgebraElement::zero(m);
    for (k, b) in rc.iter().enumerate() {
        h = h.add(&b.scale(coef[(k, 0)]));
    }
    let herm = h.hermitian_residual();
    if herm > 1e-8 * h.norm().max(1.0) {
        return Err(Error::NotHermitian(herm));
    }
    let h = h.add(&h.adjoint()).scale(c(0.5));
    if h.min_eigenvalue() <= linalg::RANK_CUTOFF {
        return Err(Error::InvalidDensity("recovered density is not positive invertible".into()));
    }
    Ok(h)
}

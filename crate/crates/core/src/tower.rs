//! GNS data, the Jones projection, the basic construction `M ⊂ M₁`, the dual
//! expectation, the bidual and the iterated dual indices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebra::{matrix_unit_basis, AlgebraElement};
use crate::error::{Error, Result};
use crate::expectation::{self, left_multiplication, right_multiplication, ConditionalExpectation, ExpectationReport};
use crate::index::{self, basis_index, pp_basis_generic, IndexValue};
use crate::linalg::{self, c, CMat, CVec, EPS_NUM};

/// `L²(M, φ)` realized as `⊕ M_{m_k}` with the Hilbert–Schmidt inner product,
/// `x̂ = x D_φ^{1/2}`.
#[derive(Debug, Clone)]
pub struct GnsData {
    expectation: ConditionalExpectation,
    d_phi: AlgebraElement,
    d_half: AlgebraElement,
    xi: CVec,
    delta: CMat,
    jones: CMat,
    /// Transposition of coordinates inside each block; `J v = P v̄`.
    perm: CMat,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GnsReport {
    pub j_squared: f64,
    pub j_commutes: f64,
    pub implements_expectation: f64,
    pub je_commute: f64,
    pub cyclic_rank: usize,
    pub faithful_rank: usize,
    pub dim: usize,
}

impl GnsReport {
    pub fn max_residual(&self) -> f64 {
        self.j_squared.max(self.j_commutes).max(self.implements_expectation).max(self.je_commute)
    }
}

/// Density of `φ = ψ∘ι⁻¹∘E` with `ψ = Tr_N / Tr_N(1)`.
pub fn phi_density(e: &ConditionalExpectation) -> Result<AlgebraElement> {
    let inc = e.inclusion();
    let m = inc.m();
    let total: usize = inc.n().block_dims().iter().sum();
    let mut blocks: Vec<CMat> = m.block_dims().iter().map(|&d| CMat::zeros(d, d)).collect();
    for (a, u) in matrix_unit_basis(m).iter().enumerate() {
        let (k, i, j) = m.unit_of_index(a);
        let value = crate::algebra::trace(&e.to_n(u)?) / c(total as f64);
        blocks[k][(j, i)] = value;
    }
    AlgebraElement::from_blocks(m, blocks)
}

pub fn gns(e: &ConditionalExpectation) -> Result<GnsData> {
    let inc = e.inclusion();
    let m = inc.m();
    let d_phi = phi_density(e)?;
    let cert = d_phi.is_positive(EPS_NUM)?;
    if cert.min_eigenvalue <= linalg::RANK_CUTOFF {
        return Err(Error::Degenerate(format!("φ is not faithful (min eigenvalue {:.3e})", cert.min_eigenvalue)));
    }
    let d_half = d_phi.positive_sqrt()?;
    let d_inv = d_phi.positive_inverse()?;
    let xi = d_half.coords();
    let delta = left_multiplication(&d_phi) * right_multiplication(&d_inv);
    let range: Vec<CVec> = matrix_unit_basis(inc.n())
        .iter()
        .map(|u| inc.apply(u).map(|x| x.mul(&d_half).coords()))
        .collect::<Result<_>>()?;
    let q = linalg::columns(&linalg::orthonormal_span(&range));
    let jones = &q * q.adjoint();
    let dim = m.dim();
    let mut perm = CMat::zeros(dim, dim);
    for a in 0..dim {
        let (k, i, j) = m.unit_of_index(a);
        perm[(m.unit_index(k, j, i), a)] = c(1.0);
    }
    Ok(GnsData { expectation: e.clone(), d_phi, d_half, xi, delta, jones, perm })
}

impl GnsData {
    pub fn expectation(&self) -> &ConditionalExpectation {
        &self.expectation
    }

    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    pub fn d_phi(&self) -> &AlgebraElement {
        &self.d_phi
    }

    pub fn xi(&self) -> &CVec {
        &self.xi
    }

    pub fn delta(&self) -> &CMat {
        &self.delta
    }

    pub fn jones(&self) -> &CMat {
        &self.jones
    }

    /// `λ(m)`.
    pub fn left(&self, m: &AlgebraElement) -> CMat {
        left_multiplication(m)
    }

    /// `η ↦ η m`.
    pub fn right(&self, m: &AlgebraElement) -> CMat {
        right_multiplication(m)
    }

    /// `x̂ = x D_φ^{1/2}`.
    pub fn hat(&self, x: &AlgebraElement) -> CVec {
        x.mul(&self.d_half).coords()
    }

    pub fn j_vec(&self, v: &CVec) -> CVec {
        &self.perm * v.map(|z| z.conj())
    }

    /// `J T J`.
    pub fn j_conj(&self, t: &CMat) -> CMat {
        &self.perm * t.map(|z| z.conj()) * &self.perm
    }

    pub fn report(&self) -> GnsReport {
        let m = self.expectation.inclusion().m().clone();
        let basis = matrix_unit_basis(&m);
        let lefts: Vec<CMat> = basis.iter().map(|u| self.left(u)).collect();
        let mut j_squared: f64 = 0.0;
        for k in 0..self.dim() {
            let mut v = CVec::zeros(self.dim());
            v[k] = c(1.0);
            let w = v.clone() * crate::linalg::C64::new(0.3, 0.7);
            j_squared = j_squared.max(linalg::vec_norm(&(self.j_vec(&self.j_vec(&w)) - &w)));
        }
        let mut j_commutes: f64 = 0.0;
        for a in &lefts {
            let ja = self.j_conj(a);
            for b in &lefts {
                j_commutes = j_commutes.max(linalg::spectral_norm(&(&ja * b - b * &ja)));
            }
        }
        let mut implements: f64 = 0.0;
        for (u, lu) in basis.iter().zip(&lefts) {
            let lhs = &self.jones * lu * &self.xi;
            let rhs = self.hat(&self.expectation.apply(u));
            implements = implements.max(linalg::vec_norm(&(lhs - rhs)));
        }
        let je_commute = linalg::spectral_norm(&(self.j_conj(&self.jones) - &self.jones));
        let orbit: Vec<CVec> = lefts.iter().map(|l| l * &self.xi).collect();
        let ops: Vec<CVec> = lefts.iter().map(linalg::vectorize).collect();
        GnsReport {
            j_squared,
            j_commutes,
            implements_expectation: implements,
            je_commute,
            cyclic_rank: linalg::span_rank(&orbit),
            faithful_rank: linalg::span_rank(&ops),
            dim: self.dim(),
        }
    }

    /// Largest `‖e λ(m) e − λ(E(m)) e‖` over the given elements.
    pub fn jones_relation_residual(&self, elements: &[AlgebraElement]) -> f64 {
        elements
            .iter()
            .map(|x| {
                let lhs = &self.jones * self.left(x) * &self.jones;
                let rhs = self.left(&self.expectation.apply(x)) * &self.jones;
                linalg::spectral_norm(&(lhs - rhs))
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct BasicConstruction {
    gns: GnsData,
    basis: Vec<CMat>,
    pub rank_e: usize,
    /// Distance between `span M e M` and `J ι(N)′ J`.
    pub span_residual: f64,
    /// Distance of `1` from `span M e M`.
    pub unit_residual: f64,
}

/// Orthonormal (Hilbert–Schmidt) basis of `{T : T A = A T for all A in gens}`.
pub fn operator_commutant(dim: usize, gens: &[CMat]) -> Vec<CMat> {
    let n = dim * dim;
    let mut system = CMat::zeros(n * gens.len().max(1), n);
    for (g_idx, g) in gens.iter().enumerate() {
        for col in 0..n {
            let mut t = CMat::zeros(dim, dim);
            t[(col / dim, col % dim)] = c(1.0);
            let v = linalg::vectorize(&(&t * g - g * &t));
            system.view_mut((g_idx * n, col), (n, 1)).copy_from(&v);
        }
    }
    linalg::nullspace(&system).iter().map(|v| linalg::unvectorize(v, dim)).collect()
}

fn span_distance(a: &[CMat], b: &[CMat]) -> f64 {
    let qa = linalg::columns(&a.iter().map(linalg::vectorize).collect::<Vec<_>>());
    let qb = linalg::columns(&b.iter().map(linalg::vectorize).collect::<Vec<_>>());
    let pa = &qa * qa.adjoint();
    let pb = &qb * qb.adjoint();
    linalg::spectral_norm(&(pa - pb))
}

pub fn basic_construction(gns: &GnsData) -> Result<BasicConstruction> {
    let inc = gns.expectation.inclusion().clone();
    let basis_m = matrix_unit_basis(inc.m());
    let lefts: Vec<CMat> = basis_m.iter().map(|u| gns.left(u)).collect();
    let mut monomials: Vec<CVec> = Vec::with_capacity(lefts.len() * lefts.len());
    for a in &lefts {
        let ae = a * &gns.jones;
        for b in &lefts {
            monomials.push(linalg::vectorize(&(&ae * b)));
        }
    }
    let basis: Vec<CMat> = linalg::orthonormal_span(&monomials)
        .iter()
        .map(|v| linalg::unvectorize(v, gns.dim()))
        .collect();
    let gens: Vec<CMat> = matrix_unit_basis(inc.n())
        .iter()
        .map(|u| inc.apply(u).map(|x| gns.left(&x)))
        .collect::<Result<_>>()?;
    let commutant: Vec<CMat> = operator_commutant(gns.dim(), &gens).iter().map(|t| gns.j_conj(t)).collect();
    let span_residual = if commutant.len() == basis.len() { span_distance(&basis, &commutant) } else { f64::INFINITY };
    let q = linalg::columns(&basis.iter().map(linalg::vectorize).collect::<Vec<_>>());
    let one = linalg::vectorize(&CMat::identity(gns.dim(), gns.dim()));
    let unit_residual = linalg::vec_norm(&(&one - &q * (q.adjoint() * &one)));
    let rank_e = linalg::span_rank(&linalg_columns(&gns.jones));
    if span_residual > 1e-8 {
        return Err(Error::Tolerance(format!(
            "span M e M ({}) differs from J ι(N)′ J ({}) by {span_residual:.3e}",
            basis.len(),
            commutant.len()
        )));
    }
    Ok(BasicConstruction { gns: gns.clone(), basis, rank_e, span_residual, unit_residual })
}

fn linalg_columns(m: &CMat) -> Vec<CVec> {
    (0..m.ncols()).map(|j| m.column(j).into_owned()).collect()
}

impl BasicConstruction {
    pub fn gns(&self) -> &GnsData {
        &self.gns
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[CMat] {
        &self.basis
    }
}

/// The dual weight `F: M₁ → M`, `Ê = Ind(E)⁻¹ F` and `E′ = J Ê(J · J) J`.
#[derive(Debug, Clone)]
pub struct DualData {
    construction: BasicConstruction,
    /// `F` as a map from row-major vectorized operators to coordinates of `M`.
    f_map: CMat,
    pub consistency_residual: f64,
    index: IndexValue,
    index_inv: AlgebraElement,
}

pub fn dual_expectation(bc: &BasicConstruction) -> Result<DualData> {
    let gns = &bc.gns;
    let e = &gns.expectation;
    let m = e.inclusion().m().clone();
    let basis_m = matrix_unit_basis(&m);
    let lefts: Vec<CMat> = basis_m.iter().map(|u| gns.left(u)).collect();
    let d2 = gns.dim() * gns.dim();
    let nmono = basis_m.len() * basis_m.len();
    let mut spanning = CMat::zeros(d2, nmono);
    let mut values = CMat::zeros(m.dim(), nmono);
    for (a, (ua, la)) in basis_m.iter().zip(&lefts).enumerate() {
        let ae = la * &gns.jones;
        for (b, (ub, lb)) in basis_m.iter().zip(&lefts).enumerate() {
            let col = a * basis_m.len() + b;
            spanning.set_column(col, &linalg::vectorize(&(&ae * lb)));
            values.set_column(col, &ua.mul(ub).coords());
        }
    }
    let kernel = linalg::nullspace(&spanning);
    let consistency_residual = kernel
        .iter()
        .map(|v| linalg::vec_norm(&(&values * v)))
        .fold(0.0, f64::max);
    if consistency_residual > 1e-8 {
        return Err(Error::Inconsistent(consistency_residual));
    }
    let f_map = values * linalg::pinv(&spanning);
    let index = index::index_of(e)?;
    let index_inv = index.to_element().positive_inverse()?;
    Ok(DualData { construction: bc.clone(), f_map, consistency_residual, index, index_inv })
}

impl DualData {
    pub fn construction(&self) -> &BasicConstruction {
        &self.construction
    }

    pub fn gns(&self) -> &GnsData {
        &self.construction.gns
    }

    pub fn index(&self) -> &IndexValue {
        &self.index
    }

    pub fn f(&self, t: &CMat) -> AlgebraElement {
        let m = self.gns().expectation.inclusion().m();
        AlgebraElement::from_coords(m, &(&self.f_map * linalg::vectorize(t)))
    }

    /// `Ê(T) = λ(Ind(E)⁻¹ F(T))`.
    pub fn ehat(&self, t: &CMat) -> CMat {
        self.gns().left(&self.index_inv.mul(&self.f(t)))
    }

    /// `E′(Y) = J Ê(J Y J) J` on `ι(N)′`.
    pub fn eprime(&self, y: &CMat) -> CMat {
        let gns = self.gns();
        gns.j_conj(&self.ehat(&gns.j_conj(y)))
    }

    pub fn range_m(&self) -> Vec<CMat> {
        let gns = self.gns();
        matrix_unit_basis(gns.expectation.inclusion().m()).iter().map(|u| gns.left(u)).collect()
    }

    pub fn ehat_report(&self, seed: u64) -> ExpectationReport {
        verify_operator_expectation(&|t| self.ehat(t), &self.range_m(), self.construction.basis(), seed)
    }

    pub fn eprime_report(&self, seed: u64) -> ExpectationReport {
        let gns = self.gns();
        let range: Vec<CMat> = self.range_m().iter().map(|t| gns.j_conj(t)).collect();
        let domain: Vec<CMat> = self.construction.basis().iter().map(|t| gns.j_conj(t)).collect();
        verify_operator_expectation(&|y| self.eprime(y), &range, &domain, seed)
    }

    /// Pimsner–Popa candidates for `M ⊂ M₁`: the right `M`-module generators `λ(u) e`.
    fn module_generators(&self) -> Vec<CMat> {
        let gns = self.gns();
        self.range_m().iter().map(|l| l * gns.jones()).collect()
    }

    /// `Ind(Ê)` by Gram–Schmidt on `M ⊂ M₁`.
    pub fn ehat_index(&self) -> Result<CMat> {
        let candidates = self.module_generators();
        let basis = pp_basis_generic(&|t: &CMat| self.ehat(t), &candidates);
        let res = index::expansion_residual(&|t: &CMat| self.ehat(t), &basis, self.construction.basis());
        if res > 1e-8 {
            return Err(Error::Degenerate(format!("Pimsner–Popa expansion in M₁ failed ({res:.3e})")));
        }
        Ok(basis_index(&basis, &candidates[0]))
    }

    /// `Ind(E′)` by Gram–Schmidt on `M′ ⊂ ι(N)′`.
    pub fn eprime_index(&self) -> Result<CMat> {
        let gns = self.gns();
        let candidates: Vec<CMat> = self.module_generators().iter().map(|t| gns.j_conj(t)).collect();
        let domain: Vec<CMat> = self.construction.basis().iter().map(|t| gns.j_conj(t)).collect();
        let basis = pp_basis_generic(&|y: &CMat| self.eprime(y), &candidates);
        let res = index::expansion_residual(&|y: &CMat| self.eprime(y), &basis, &domain);
        if res > 1e-8 {
            return Err(Error::Degenerate(format!("Pimsner–Popa expansion in ι(N)′ failed ({res:.3e})")));
        }
        Ok(basis_index(&basis, &candidates[0]))
    }
}

/// Axiom residuals of an expectation between operator algebras on a Hilbert
/// space, given spanning sets of its range and domain. Positivity and
/// faithfulness are sampled on seeded random elements.
pub fn verify_operator_expectation(
    map: &dyn Fn(&CMat) -> CMat,
    range: &[CMat],
    domain: &[CMat],
    seed: u64,
) -> ExpectationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = domain[0].nrows();
    let one = CMat::identity(dim, dim);
    let unital = linalg::spectral_norm(&(map(&one) - &one));
    let qr = linalg::columns(&linalg::orthonormal_span(&range.iter().map(linalg::vectorize).collect::<Vec<_>>()));
    let mut idempotent: f64 = 0.0;
    let mut range_res: f64 = 0.0;
    for t in domain {
        let et = map(t);
        idempotent = idempotent.max(linalg::spectral_norm(&(map(&et) - &et)));
        let v = linalg::vectorize(&et);
        range_res = range_res.max(linalg::vec_norm(&(&v - &qr * (qr.adjoint() * &v))));
    }
    for b in range {
        range_res = range_res.max(linalg::spectral_norm(&(map(b) - b)));
    }
    let combo = |set: &[CMat], rng: &mut ChaCha8Rng| -> CMat {
        set.iter().fold(CMat::zeros(dim, dim), |acc, x| acc + x * linalg::random_complex(rng))
    };
    let mut bimodular: f64 = 0.0;
    for _ in 0..20 {
        let a = combo(range, &mut rng);
        let b = combo(range, &mut rng);
        let t = combo(domain, &mut rng);
        let scale = linalg::spectral_norm(&a) * linalg::spectral_norm(&b) * linalg::spectral_norm(&t);
        let r = linalg::spectral_norm(&(map(&(&a * &t * &b)) - &a * map(&t) * &b));
        bimodular = bimodular.max(r / scale.max(1.0));
    }
    let mut cp_min: f64 = f64::INFINITY;
    for _ in 0..10 {
        let k = 3;
        let ts: Vec<CMat> = (0..k).map(|_| combo(domain, &mut rng)).collect();
        let mut gram = CMat::zeros(k * dim, k * dim);
        let mut scale: f64 = 0.0;
        for i in 0..k {
            for j in 0..k {
                let g = map(&(ts[i].adjoint() * &ts[j]));
                scale = scale.max(linalg::spectral_norm(&g));
                gram.view_mut((i * dim, j * dim), (dim, dim)).copy_from(&g);
            }
        }
        cp_min = cp_min.min(linalg::min_eigenvalue(&gram) / scale.max(1e-300));
    }
    let completely_positive = (-cp_min).max(0.0);
    let samples = domain.len().min(32);
    let ts: Vec<CMat> = (0..samples).map(|_| combo(domain, &mut rng)).collect();
    let mut gram = CMat::zeros(samples, samples);
    for (a, ta) in ts.iter().enumerate() {
        for (b, tb) in ts.iter().enumerate() {
            gram[(a, b)] = map(&(ta.adjoint() * tb)).trace();
        }
    }
    let faithful_min_eigenvalue = linalg::min_eigenvalue(&gram) / linalg::spectral_norm(&gram).max(1e-300);
    ExpectationReport { unital, idempotent, range: range_res, bimodular, completely_positive, faithful_min_eigenvalue }
}

#[derive(Debug, Clone, Serialize)]
pub struct DualIndexCheck {
    /// `ι⁻¹(E(Ind E))` per N-block.
    pub closed_form: Vec<f64>,
    /// `Ind(Ê)` read off as `J ι(z) J`-coefficients per N-block.
    pub ehat_index: Vec<f64>,
    /// `Ind(E′)` read off as `λ(ι(z))`-coefficients per N-block.
    pub eprime_index: Vec<f64>,
    /// Largest operator-norm deviation of either computed index from its
    /// closed form.
    pub residual: f64,
}

/// `E(Ind E)` as an element of `N`.
pub fn dual_index_closed_form(e: &ConditionalExpectation) -> Result<AlgebraElement> {
    let ind = index::index_of(e)?;
    e.to_n(&ind.to_element())
}

pub fn cross_check_dual_index(dual: &DualData) -> Result<DualIndexCheck> {
    let gns = dual.gns();
    let e = gns.expectation();
    let inc = e.inclusion();
    let cn = dual_index_closed_form(e)?;
    let c_m = inc.apply(&cn)?;
    let lambda_c = gns.left(&c_m);
    let rho_c = gns.j_conj(&lambda_c);
    let ehat = dual.ehat_index()?;
    let eprime = dual.eprime_index()?;
    let residual = linalg::spectral_norm(&(&ehat - &rho_c)).max(linalg::spectral_norm(&(&eprime - &lambda_c)));
    let central: Vec<CMat> = (0..inc.n().num_blocks())
        .map(|i| {
            let mut s = vec![c(0.0); inc.n().num_blocks()];
            s[i] = c(1.0);
            let z = inc.apply(&AlgebraElement::block_scalars(inc.n(), &s)).expect("N element");
            gns.left(&z)
        })
        .collect();
    let coeffs = |t: &CMat, conj: bool| -> Vec<f64> {
        let cols: Vec<CVec> = central
            .iter()
            .map(|z| linalg::vectorize(&if conj { gns.j_conj(z) } else { z.clone() }))
            .collect();
        let (x, _) = linalg::lstsq(&linalg::columns(&cols), &CMat::from_column_slice(t.len(), 1, linalg::vectorize(t).as_slice()));
        x.iter().map(|z| z.re).collect()
    };
    Ok(DualIndexCheck {
        closed_form: crate::algebra::CentralElement::from_element(&cn, 1e-8)?.real_values(),
        ehat_index: coeffs(&ehat, true),
        eprime_index: coeffs(&eprime, false),
        residual,
    })
}

/// `E″ = E(Ind E)⁻¹ E(Ind E ·)`, returned with its density `c⁻¹ Ind(E) h`.
pub fn bidual(e: &ConditionalExpectation) -> Result<ConditionalExpectation> {
    let inc = e.inclusion();
    let ind = index::index_of(e)?.to_element();
    let c_elem = e.apply(&ind);
    let h2 = c_elem.positive_inverse()?.mul(&ind).mul(e.density());
    let h2 = h2.add(&h2.adjoint()).scale(c(0.5));
    expectation::from_density(inc, e.reference(), &h2)
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationEntry {
    pub n: usize,
    /// `"M"` for even `n` (values per M-block), `"N"` for odd `n`.
    pub level: &'static str,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationReport {
    pub sequence: Vec<IterationEntry>,
    pub converged: bool,
    /// First `n` whose entry differs from its predecessor by less than `tol`.
    pub converged_at: Option<usize>,
    pub limit: Option<f64>,
    /// Whether successive entries are ordered (all `≤` or all `≥`) as
    /// elements of `M`.
    pub monotone: bool,
    pub sup_norm: f64,
    /// Largest deviation from parity containment (even entries central in `M`,
    /// odd entries in `ι(Z(N))`).
    pub parity_residual: f64,
}

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_STEPS: usize = 200;

/// `Ind(E⁽ⁿ⁾)` for `n = 0, 1, …`: even iterates by `E⁽²ᵏ⁺²⁾ = (E⁽²ᵏ⁾)″`, odd
/// ones by `Ind(E⁽²ᵏ⁺¹⁾) = E⁽²ᵏ⁾(Ind E⁽²ᵏ⁾)`.
pub fn iterate_duals(e: &ConditionalExpectation, n_max: usize, tol: f64) -> Result<IterationReport> {
    let inc = e.inclusion().clone();
    let mut current = e.clone();
    let mut as_m: Vec<AlgebraElement> = Vec::new();
    let mut sequence = Vec::new();
    let mut parity_residual: f64 = 0.0;
    let mut converged_at = None;
    let mut n = 0;
    while n <= n_max {
        let (entry, elem) = if n % 2 == 0 {
            let ind = index::index_of(&current)?;
            let elem = ind.to_element();
            let z = crate::algebra::CentralElement::from_element(&elem, 1.0).expect("loose tolerance");
            parity_residual = parity_residual.max(z.to_element().sub(&elem).norm());
            (IterationEntry { n, level: "M", values: ind.blocks.clone() }, elem)
        } else {
            let ind_prev = as_m.last().expect("even entry precedes odd");
            let cm = current.apply(ind_prev);
            let cn = inc.pull_back(&cm)?;
            let z = crate::algebra::CentralElement::from_element(&cn, 1.0).expect("loose tolerance");
            parity_residual = parity_residual.max(z.to_element().sub(&cn).norm());
            current = bidual(&current)?;
            (IterationEntry { n, level: "N", values: z.real_values() }, cm)
        };
        if let Some(prev) = as_m.last() {
            if converged_at.is_none() && elem.sub(prev).norm() < tol * elem.norm().max(1.0) {
                converged_at = Some(n);
            }
        }
        as_m.push(elem);
        sequence.push(entry);
        if let Some(at) = converged_at {
            if n > at {
                break;
            }
        }
        n += 1;
    }
    let converged = converged_at.is_some();
    let last = sequence.last().expect("nonempty");
    let top = last.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bottom = last.values.iter().copied().fold(f64::INFINITY, f64::min);
    let limit = (converged && top - bottom <= tol.max(1e-12) * top.max(1.0)).then_some(top);
    let mut up = true;
    let mut down = true;
    for w in as_m.windows(2) {
        let diff = w[1].sub(&w[0]);
        let slack = 1e-9 * w[0].norm().max(1.0);
        for b in diff.blocks() {
            let (vals, _) = linalg::eigh(b);
            if vals.iter().any(|&v| v > slack) {
                down = false;
            }
            if vals.iter().any(|&v| v < -slack) {
                up = false;
            }
        }
    }
    let sup_norm = as_m.iter().map(|x| x.norm()).fold(0.0, f64::max);
    Ok(IterationReport {
        sequence,
        converged,
        converged_at,
        limit,
        monotone: up || down,
        sup_norm,
        parity_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::TraceVector;
    use crate::expectation::{from_density, trace_expectation};
    use crate::fixtures;

    fn f1_rho(p: f64) -> ConditionalExpectation {
        let f1 = fixtures::f1();
        let h = AlgebraElement::from_blocks(
            f1.m(),
            vec![CMat::from_diagonal(&CVec::from_vec(vec![c(2.0 * p), c(2.0 * (1.0 - p))]))],
        )
        .unwrap();
        from_density(&f1, &TraceVector::uniform(f1.m()), &h).unwrap()
    }

    fn f3_p(p: f64) -> ConditionalExpectation {
        let f3 = fixtures::f3();
        let h = AlgebraElement::block_scalars(f3.m(), &[c(2.0 * p), c(2.0 * (1.0 - p))]);
        from_density(&f3, &TraceVector::uniform(f3.m()), &h).unwrap()
    }

    fn trace_e(inc: &std::sync::Arc<crate::inclusion::Inclusion>) -> ConditionalExpectation {
        trace_expectation(inc, &TraceVector::uniform(inc.m())).unwrap()
    }

    #[test]
    fn modular_operator_spectrum() {
        let p = 0.3;
        let g = gns(&f1_rho(p)).unwrap();
        let (mut vals, _) = linalg::eigh(g.delta());
        vals.sort_by(f64::total_cmp);
        let mut want = vec![1.0, 1.0, p / (1.0 - p), (1.0 - p) / p];
        want.sort_by(f64::total_cmp);
        for (a, b) in vals.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
        let g = gns(&trace_e(&fixtures::f1())).unwrap();
        assert!(linalg::spectral_norm(&(g.delta() - CMat::identity(4, 4))) < 1e-12);
        let report = g.report();
        assert!(report.max_residual() < 1e-10);
        assert_eq!(report.cyclic_rank, 4);
    }

    #[test]
    fn basic_construction_dimensions() {
        let bc = basic_construction(&gns(&trace_e(&fixtures::f1())).unwrap()).unwrap();
        assert_eq!((bc.dim(), bc.rank_e), (16, 1));
        let bc = basic_construction(&gns(&trace_e(&fixtures::f2())).unwrap()).unwrap();
        assert_eq!((bc.dim(), bc.rank_e), (8, 2));
        let bc = basic_construction(&gns(&trace_e(&fixtures::f5())).unwrap()).unwrap();
        assert_eq!((bc.dim(), bc.rank_e), (4, 4));
        assert!(linalg::spectral_norm(&(bc.gns().jones() - CMat::identity(4, 4))) < 1e-12);
        assert!(bc.unit_residual < 1e-10);
    }

    #[test]
    fn dual_expectation_examples() {
        let dual = dual_expectation(&basic_construction(&gns(&trace_e(&fixtures::f1())).unwrap()).unwrap()).unwrap();
        let e = dual.gns().jones().clone();
        assert!(linalg::spectral_norm(&(dual.ehat(&e) - CMat::identity(4, 4) * c(0.25))) < 1e-10);
        assert!(dual.f(&e).sub(&AlgebraElement::identity(fixtures::f1().m())).norm() < 1e-10);
        assert!(dual.ehat_report(1).accepted(1e-9));
        assert!(dual.eprime_report(2).accepted(1e-9));

        let dual = dual_expectation(&basic_construction(&gns(&f3_p(0.3)).unwrap()).unwrap()).unwrap();
        let check = cross_check_dual_index(&dual).unwrap();
        assert!((check.closed_form[0] - 2.0).abs() < 1e-10);
        assert!((check.ehat_index[0] - 2.0).abs() < 1e-8 && check.residual < 1e-8);

        let dual = dual_expectation(&basic_construction(&gns(&trace_e(&fixtures::f4())).unwrap()).unwrap()).unwrap();
        let check = cross_check_dual_index(&dual).unwrap();
        assert!((check.eprime_index[0] - 13.0).abs() < 1e-8 && check.residual < 1e-8);
    }

    #[test]
    fn bidual_examples() {
        let e = f3_p(0.3);
        let e2 = bidual(&e).unwrap();
        let f3 = fixtures::f3();
        let avg = from_density(&f3, e.reference(), &AlgebraElement::identity(f3.m())).unwrap();
        assert!(e2.distance(&avg) < 1e-12 && e2.distance(&e) > 0.1);
        let e = f1_rho(0.2);
        assert!(bidual(&e).unwrap().distance(&e) < 1e-12);
        let e2 = bidual(&trace_e(&fixtures::f4())).unwrap();
        let ind = index::index_of(&e2).unwrap();
        assert!(ind.blocks.iter().all(|v| (v - 13.0).abs() < 1e-10));
    }

    #[test]
    fn iterated_duals() {
        let r = iterate_duals(&f3_p(0.3), DEFAULT_STEPS, DEFAULT_TOL).unwrap();
        let vals: Vec<Vec<f64>> = r.sequence.iter().map(|e| e.values.clone()).collect();
        let want = [vec![10.0 / 3.0, 10.0 / 7.0], vec![2.0], vec![2.0, 2.0], vec![2.0]];
        assert_eq!(vals.len(), want.len());
        for (a, b) in vals.iter().flatten().zip(want.iter().flatten()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(r.converged && (r.limit.unwrap() - 2.0).abs() < 1e-10);

        let r = iterate_duals(&trace_e(&fixtures::f4()), DEFAULT_STEPS, DEFAULT_TOL).unwrap();
        assert_eq!(r.converged_at, Some(2));
        assert!(!r.monotone);
        assert!((r.limit.unwrap() - 13.0).abs() < 1e-10);

        let r = iterate_duals(&trace_e(&fixtures::f5()), DEFAULT_STEPS, DEFAULT_TOL).unwrap();
        assert!(r.sequence.iter().all(|e| e.values.iter().all(|v| (v - 1.0).abs() < 1e-12)));
        assert_eq!(r.limit, Some(1.0));
    }
}

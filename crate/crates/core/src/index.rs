//! Pimsner–Popa bases, the index `Ind(E) ∈ Z(M)`, the best Pimsner–Popa
//! constant and the minimal expectation.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::{matrix_unit_basis, AlgebraElement, CentralElement, StarElement, TraceVector};
use crate::error::{Error, Result};
use crate::expectation::{self, ConditionalExpectation};
use crate::inclusion::Inclusion;
use crate::linalg::{self, c, CVec, C64, EPS_NUM};
use crate::optim::{nelder_mead, NelderMeadOptions};

/// Gram–Schmidt over the right module `M_N` with inner product `E(x*y)`.
/// Returns `λ₁, …, λ_k` with `E(λᵢ*λⱼ) = δᵢⱼ pᵢ` for projections `pᵢ`.
pub fn pp_basis_generic<T: StarElement>(expect: &dyn Fn(&T) -> T, candidates: &[T]) -> Vec<T> {
    let mut basis: Vec<T> = Vec::new();
    for u in candidates {
        let scale = u.norm().powi(2).max(1e-300);
        let mut v = u.clone();
        for _ in 0..2 {
            for l in &basis {
                v = v.sub(&l.mul(&expect(&l.adjoint().mul(&v))));
            }
        }
        let q = expect(&v.adjoint().mul(&v));
        if q.norm() <= 1e-10 * scale {
            continue;
        }
        let cut = 1e-10 * scale;
        let inv_root = q.hermitian_fn(&|x: f64| if x > cut { 1.0 / x.sqrt() } else { 0.0 });
        basis.push(v.mul(&inv_root));
    }
    basis
}

/// `Σ λᵢ λᵢ*`.
pub fn basis_index<T: StarElement>(basis: &[T], like: &T) -> T {
    basis.iter().fold(like.zero_like(), |acc, l| acc.add(&l.mul(&l.adjoint())))
}

/// Largest deviation from `m = Σ λᵢ E(λᵢ* m)` over the given test elements.
pub fn expansion_residual<T: StarElement>(expect: &dyn Fn(&T) -> T, basis: &[T], tests: &[T]) -> f64 {
    tests
        .iter()
        .map(|m| {
            let sum = basis.iter().fold(m.zero_like(), |acc, l| acc.add(&l.mul(&expect(&l.adjoint().mul(m)))));
            sum.sub(m).norm() / m.norm().max(1.0)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct PPBasis {
    pub elements: Vec<AlgebraElement>,
}

impl PPBasis {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn index_element(&self, e: &ConditionalExpectation) -> AlgebraElement {
        basis_index(&self.elements, &AlgebraElement::identity(e.inclusion().m()))
    }

    /// Largest `‖E(λᵢ*λⱼ) − δᵢⱼ pᵢ‖` where `pᵢ` must be a projection.
    pub fn orthonormality_residual(&self, e: &ConditionalExpectation) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.elements.iter().enumerate() {
            for (j, b) in self.elements.iter().enumerate() {
                let g = e.apply(&a.adjoint().mul(b));
                let r = if i == j { g.mul(&g).sub(&g).norm() } else { g.norm() };
                worst = worst.max(r);
            }
        }
        worst
    }

    pub fn expansion_residual(&self, e: &ConditionalExpectation, tests: &[AlgebraElement]) -> f64 {
        expansion_residual(&|x: &AlgebraElement| e.apply(x), &self.elements, tests)
    }
}

/// Deterministic Pimsner–Popa basis. Candidates: `1`, then per block the
/// diagonal units and the Hermitian pairs `e_ij + e_ji`, `i(e_ij − e_ji)`.
pub fn pp_basis(e: &ConditionalExpectation) -> Result<PPBasis> {
    let m = e.inclusion().m();
    let mut candidates = vec![AlgebraElement::identity(m)];
    for (k, &d) in m.block_dims().iter().enumerate() {
        for i in 0..d {
            candidates.push(AlgebraElement::matrix_unit(m, k, i, i));
        }
        for i in 0..d {
            for j in i + 1..d {
                let a = AlgebraElement::matrix_unit(m, k, i, j);
                let b = AlgebraElement::matrix_unit(m, k, j, i);
                candidates.push(a.add(&b));
                candidates.push(a.sub(&b).scale(C64::new(0.0, 1.0)));
            }
        }
    }
    finish_basis(e, &candidates)
}

/// Pimsner–Popa basis from random candidates (matrix units appended as a
/// fallback so the run never loses rank).
pub fn pp_basis_randomized<R: Rng + ?Sized>(e: &ConditionalExpectation, rng: &mut R) -> Result<PPBasis> {
    let m = e.inclusion().m();
    let mut candidates: Vec<AlgebraElement> = (0..m.dim()).map(|_| AlgebraElement::random(m, rng)).collect();
    candidates.extend(matrix_unit_basis(m));
    finish_basis(e, &candidates)
}

fn finish_basis(e: &ConditionalExpectation, candidates: &[AlgebraElement]) -> Result<PPBasis> {
    let elements = pp_basis_generic(&|x: &AlgebraElement| e.apply(x), candidates);
    let basis = PPBasis { elements };
    let tests = matrix_unit_basis(e.inclusion().m());
    let res = basis.expansion_residual(e, &tests);
    if res > 1e-8 {
        return Err(Error::Degenerate(format!("Pimsner–Popa expansion lost rank (residual {res:.3e})")));
    }
    Ok(basis)
}

#[derive(Debug, Clone, Serialize)]
pub struct IndexValue {
    /// One scalar per M-block.
    pub blocks: Vec<f64>,
    #[serde(skip)]
    pub central: Option<CentralElement>,
}

impl IndexValue {
    pub fn from_central(z: CentralElement) -> Self {
        Self { blocks: z.real_values(), central: Some(z) }
    }

    pub fn norm(&self) -> f64 {
        self.blocks.iter().copied().fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.blocks.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn gap(&self) -> f64 {
        self.norm() - self.min()
    }

    pub fn to_element(&self) -> AlgebraElement {
        self.central.as_ref().expect("index carries its central element").to_element()
    }
}

/// `Ind(E) = Σ λᵢλᵢ*` checked to be central and `≥ 1`.
pub fn index_of(e: &ConditionalExpectation) -> Result<IndexValue> {
    let basis = pp_basis(e)?;
    index_from_basis(e, &basis)
}

pub fn index_from_basis(e: &ConditionalExpectation, basis: &PPBasis) -> Result<IndexValue> {
    let ind = basis.index_element(e);
    let z = CentralElement::from_element(&ind, 1e-8 * ind.norm().max(1.0))
        .map_err(|err| Error::Degenerate(format!("index is not central: {err}")))?;
    let value = IndexValue::from_central(z);
    if value.min() < 1.0 - EPS_NUM {
        return Err(Error::NotExpectation(format!("index block below 1: {:?}", value.blocks)));
    }
    Ok(value)
}

#[derive(Debug, Clone, Serialize)]
pub struct PPBound {
    /// Best `λ` with `E(x) ≥ λ x` for all positive `x`.
    pub lambda: f64,
    /// The same constant from an independent random sweep (an upper bound).
    pub sweep_lambda: f64,
    pub evaluations: usize,
}

/// Minimizes `1 / (v* E(vv*)_k⁺ v)` over unit vectors `v` in each block.
pub fn pp_bound_constant(e: &ConditionalExpectation) -> PPBound {
    pp_bound_with_seed(e, 0x5eed)
}

pub fn pp_bound_with_seed(e: &ConditionalExpectation, seed: u64) -> PPBound {
    let m = e.inclusion().m().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_g: f64 = 0.0;
    let mut sweep_g: f64 = 0.0;
    let mut evaluations = 0;
    for (k, &mk) in m.block_dims().iter().enumerate() {
        let ratio = |v: &CVec| rank_one_ratio(e, k, v);
        for _ in 0..400 {
            let v = linalg::random_vector(&mut rng, mk);
            sweep_g = sweep_g.max(ratio(&v));
        }
        let mut starts: Vec<Vec<f64>> = (0..mk)
            .map(|i| (0..2 * mk).map(|j| if j == 2 * i { 1.0 } else { 0.0 }).collect())
            .collect();
        for _ in 0..4 {
            starts.push((0..2 * mk).map(|_| rng.random_range(-1.0..1.0)).collect());
        }
        for x0 in starts {
            let objective = |x: &[f64]| -ratio(&real_to_vec(x));
            let opts = NelderMeadOptions { initial_step: 0.3, max_evals: 400, ..Default::default() };
            let r = nelder_mead(objective, &x0, &opts);
            evaluations += r.evals;
            best_g = best_g.max(-r.f);
        }
    }
    let best_g = best_g.max(sweep_g);
    PPBound { lambda: 1.0 / best_g, sweep_lambda: 1.0 / sweep_g, evaluations }
}

fn real_to_vec(x: &[f64]) -> CVec {
    CVec::from_fn(x.len() / 2, |i, _| C64::new(x[2 * i], x[2 * i + 1]))
}

/// Relative size below which eigenvalues of `E(vv*)_k` count as zero.
const SUPPORT_CUTOFF: f64 = 1e-7;

/// `v* E(vv*)_k⁺ v` for unit-normalized `v` in block `k`. For a finite-index
/// `E` the vector `v` always lies in the support of `E(vv*)_k`; points where
/// it numerically does not are near-singular and score 0.
fn rank_one_ratio(e: &ConditionalExpectation, k: usize, v: &CVec) -> f64 {
    let n = linalg::vec_norm(v);
    if n < 1e-12 {
        return 0.0;
    }
    let v = v / c(n);
    let m = e.inclusion().m();
    let mut blocks: Vec<_> = m.block_dims().iter().map(|&d| linalg::CMat::zeros(d, d)).collect();
    blocks[k] = &v * v.adjoint();
    let x = AlgebraElement::from_blocks(m, blocks).expect("block shapes");
    let ex = e.apply(&x);
    let (vals, vecs) = linalg::eigh(&linalg::hermitian_part(ex.block(k)));
    let cutoff = SUPPORT_CUTOFF * vals.iter().copied().fold(0.0, f64::max);
    let (mut inside, mut outside) = (0.0, 0.0);
    for (i, &l) in vals.iter().enumerate() {
        let w = (vecs.column(i).adjoint() * &v)[(0, 0)].norm_sqr();
        if l > cutoff {
            inside += w / l;
        } else {
            outside += w;
        }
    }
    if outside.sqrt() > 1e-6 {
        return 0.0;
    }
    inside
}

#[derive(Debug, Clone)]
pub struct MinimalExpectation {
    pub expectation: ConditionalExpectation,
    pub h: AlgebraElement,
    pub index: IndexValue,
    pub ind0: f64,
    pub evaluations: usize,
    /// Eigenvalues of the optimizer state `h·s / Tr_s(1)` (ascending).
    pub density_weights: Vec<f64>,
}

pub const MINIMIZE_BUDGET: usize = 5000;
const RESTARTS: usize = 8;

/// Minimizes `‖Ind(E_h)‖` over `h = exp(a)/E_τ(exp a)`, `a` Hermitian in
/// `ι(N)′∩M`.
pub fn minimize_index(inc: &Arc<Inclusion>, s: &TraceVector) -> Result<MinimalExpectation> {
    if !inc.is_connected() {
        return Err(Error::NotConnected);
    }
    let herm = reduced_hermitian_basis(inc);
    let dim = herm.len();
    let objective = |x: &[f64], p: Option<f64>| -> f64 {
        match index_for_params(inc, s, &herm, x) {
            Ok(v) => match p {
                Some(p) => {
                    let top = v.norm();
                    top * v.blocks.iter().map(|b| (b / top).powf(p)).sum::<f64>().powf(1.0 / p)
                }
                None => v.norm(),
            },
            Err(_) => f64::INFINITY,
        }
    };

    let stage_budget = 180;
    let starts: Vec<Vec<f64>> = (0..RESTARTS)
        .map(|r| {
            if r == 0 {
                vec![0.0; dim]
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + r as u64);
                (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
            }
        })
        .collect();
    let explored: Vec<(Vec<f64>, f64, usize)> = starts
        .par_iter()
        .map(|x0| {
            let mut evals = 0;
            let mut x = x0.clone();
            for p in [8.0, 64.0] {
                let opts = NelderMeadOptions {
                    initial_step: 0.5,
                    max_evals: stage_budget - dim - 2,
                    ..Default::default()
                };
                let r = nelder_mead(|y: &[f64]| objective(y, Some(p)), &x, &opts);
                evals += r.evals;
                x = r.x;
            }
            let f = objective(&x, None);
            (x, f, evals + 1)
        })
        .collect();
    let mut evaluations: usize = explored.iter().map(|e| e.2).sum();
    let (mut x, mut f) = explored
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(x, f, _)| (x.clone(), *f))
        .expect("at least one restart");

    let mut step = 0.1;
    while evaluations + dim + 3 < MINIMIZE_BUDGET && step > 1e-9 {
        let remaining = MINIMIZE_BUDGET - evaluations;
        let opts = NelderMeadOptions {
            initial_step: step,
            max_evals: remaining.min(600) - dim - 2,
            ..Default::default()
        };
        let r = nelder_mead(|y: &[f64]| objective(y, None), &x, &opts);
        evaluations += r.evals;
        if r.f < f {
            x = r.x;
            f = r.f;
        }
        step *= 0.2;
        let value = index_for_params(inc, s, &herm, &x)?;
        if value.gap() <= 1e-6 * value.norm() {
            break;
        }
    }

    let h = params_to_density(inc, s, &herm, &x)?;
    let expectation = expectation::from_density(inc, s, &h)?;
    let index = index_of(&expectation)?;
    let ind0 = index.norm();
    let gap = index.gap();
    if gap > 1e-4 * ind0 {
        return Err(Error::Tolerance(format!("minimal index is not scalar (gap {gap:.3e}, ind₀ {ind0})")));
    }
    let total = crate::algebra::trace_eval(s, &AlgebraElement::identity(inc.m()))?.re;
    let mut density_weights = Vec::new();
    for (k, block) in h.blocks().iter().enumerate() {
        let (vals, _) = linalg::eigh(block);
        density_weights.extend(vals.iter().map(|v| v * s.weights()[k] / total));
    }
    density_weights.sort_by(f64::total_cmp);
    Ok(MinimalExpectation { expectation, h, index, ind0, evaluations, density_weights })
}

/// Minimal projections of a maximal abelian subalgebra of `ι(N)′∩M`, read
/// off the spectral projections of a generic Hermitian element. `Ind(E_h)` is
/// invariant under unitary conjugation of `h` inside `ι(N)′∩M`, so densities
/// diagonal in this subalgebra reach every value of the objective. Falls back
/// to the full Hermitian basis if the spectrum is accidentally degenerate.
fn reduced_hermitian_basis(inc: &Inclusion) -> Vec<AlgebraElement> {
    let herm = inc.hermitian_relative_commutant();
    let mut rng = ChaCha8Rng::seed_from_u64(0xa5a);
    let h0 = herm
        .iter()
        .fold(AlgebraElement::zero(inc.m()), |acc, b| acc.add(&b.scale(c(rng.random_range(-1.0..1.0)))));
    let m = inc.m();
    let mut spectrum: Vec<(f64, usize, CVec)> = Vec::new();
    for (k, block) in h0.blocks().iter().enumerate() {
        let (vals, vecs) = linalg::eigh(block);
        for (i, v) in vals.iter().enumerate() {
            spectrum.push((*v, k, vecs.column(i).into_owned()));
        }
    }
    spectrum.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut projections: Vec<AlgebraElement> = Vec::new();
    let mut start = 0;
    for i in 1..=spectrum.len() {
        if i == spectrum.len() || spectrum[i].0 - spectrum[i - 1].0 > 1e-6 {
            let mut blocks: Vec<_> = m.block_dims().iter().map(|&d| linalg::CMat::zeros(d, d)).collect();
            for (_, k, v) in &spectrum[start..i] {
                blocks[*k] += v * v.adjoint();
            }
            projections.push(AlgebraElement::from_blocks(m, blocks).expect("block shapes"));
            start = i;
        }
    }
    let abelian_dim: usize = inc.lambda().iter().flatten().sum();
    let commutes = projections
        .iter()
        .all(|p| expectation::relative_commutant_residual(inc, p) < 1e-8);
    if projections.len() == abelian_dim && commutes {
        projections
    } else {
        herm
    }
}

fn params_to_density(inc: &Inclusion, s: &TraceVector, herm: &[AlgebraElement], x: &[f64]) -> Result<AlgebraElement> {
    let a = herm
        .iter()
        .zip(x)
        .fold(AlgebraElement::zero(inc.m()), |acc, (b, t)| acc.add(&b.scale(c(*t))));
    expectation::density_from_log(inc, s, &a)
}

fn index_for_params(inc: &Arc<Inclusion>, s: &TraceVector, herm: &[AlgebraElement], x: &[f64]) -> Result<IndexValue> {
    let h = params_to_density(inc, s, herm, x)?;
    let e = expectation::from_density(inc, s, &h)?;
    index_of(&e)
}

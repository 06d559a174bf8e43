//! Randomized properties shared by the property suite and the acceptance run.
//! Each takes an inclusion index into [`inclusions`] and a seed.

#![allow(dead_code)]

use std::sync::Arc;

use condexp::algebra::{matrix_unit_basis, AlgebraElement, TraceVector};
use condexp::bimodule::{Category, Intertwiner, Word};
use condexp::expectation::{multiplicative_domain, random_expectation, ConditionalExpectation};
use condexp::fixtures;
use condexp::inclusion::Inclusion;
use condexp::index::{index_of, pp_basis, pp_bound_with_seed};
use condexp::linalg;
use condexp::tower::iterate_duals;
use proptest::test_runner::{Config, RngSeed};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const CASES: u32 = 100;
pub const SEED: u64 = 0x5eed;

pub fn config() -> Config {
    Config { cases: CASES, rng_seed: RngSeed::Fixed(SEED), failure_persistence: None, ..Config::default() }
}

/// F1–F5, `M₂ ⊂ M₄` and `ℂ² ⊂ M₂ ⊕ M₃` with `Λ = [[1, 1], [1, 2]]`.
pub fn inclusions() -> Vec<Arc<Inclusion>> {
    let mut out = fixtures::all();
    out.push(fixtures::fixture(&[2], "M2", &[4], "M4", &[vec![2]]));
    out.push(fixtures::fixture(&[1, 1], "C2", &[2, 3], "M2+M3", &[vec![1, 1], vec![1, 2]]));
    out
}

pub fn random_e(k: usize, seed: u64) -> ConditionalExpectation {
    let inc = inclusions()[k % inclusions().len()].clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_expectation(&inc, &TraceVector::uniform(inc.m()), 1.0, &mut rng).expect("random expectation")
}

fn check(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

/// `(f ⊗ g)∘(h ⊗ k) = (f∘h) ⊗ (g∘k)` and `(f ⊗ g)* = f* ⊗ g*`, on words of
/// total length at most four.
pub fn interchange(k: usize, seed: u64) -> Result<(), String> {
    let inc = inclusions()[k % inclusions().len()].clone();
    let cat = Category::new(inc);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let long_outer = seed & 1 == 0;
    let outer: Vec<Word> =
        if long_outer { vec![Word::parse("i").unwrap(), Word::parse("i ibar i").unwrap()] } else { vec![Word::iota()] };
    let inner: Vec<Word> =
        if long_outer { vec![Word::iota_bar()] } else { vec![Word::iota_bar(), Word::parse("ibar i ibar").unwrap()] };
    let pick = |words: &[Word], shift: u32| words[((seed >> shift) as usize) % words.len()].clone();
    let (s1, m1, t1) = (pick(&outer, 1), pick(&outer, 2), pick(&outer, 3));
    let (s2, m2, t2) = (pick(&inner, 4), pick(&inner, 5), pick(&inner, 6));
    let rand = |s: &Word, t: &Word, rng: &mut ChaCha8Rng| Intertwiner::random(&cat, s, t, rng).unwrap();
    let h = rand(&s1, &m1, &mut rng);
    let f = rand(&m1, &t1, &mut rng);
    let kk = rand(&s2, &m2, &mut rng);
    let g = rand(&m2, &t2, &mut rng);
    let lhs = f.tensor(&g).unwrap().compose(&h.tensor(&kk).unwrap()).unwrap();
    let rhs = f.compose(&h).unwrap().tensor(&g.compose(&kk).unwrap()).unwrap();
    let scale = lhs.norm().max(1.0);
    let d = lhs.distance(&rhs).unwrap();
    check(d <= 1e-10 * scale, || format!("interchange residual {d:.3e}"))?;
    let adj = f.tensor(&g).unwrap().adjoint().distance(&f.adjoint().tensor(&g.adjoint()).unwrap()).unwrap();
    check(adj <= 1e-12 * scale, || format!("adjoint residual {adj:.3e}"))
}

/// `m = Σ λ_k E(λ_k* m)` and `E(λ_i* λ_j) = δ_ij p_j`.
pub fn pp_expansion(k: usize, seed: u64) -> Result<(), String> {
    let e = random_e(k, seed);
    let basis = pp_basis(&e).map_err(|x| x.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    let tests: Vec<AlgebraElement> = (0..3).map(|_| AlgebraElement::random(e.inclusion().m(), &mut rng)).collect();
    let exp = basis.expansion_residual(&e, &tests);
    check(exp <= 1e-8, || format!("expansion residual {exp:.3e}"))?;
    let orth = basis.orthonormality_residual(&e);
    check(orth <= 1e-8, || format!("orthonormality residual {orth:.3e}"))
}

/// `λ_best ≥ ‖Ind(E)‖⁻¹`.
pub fn pp_bound(k: usize, seed: u64) -> Result<(), String> {
    let e = random_e(k, seed);
    let bound = 1.0 / index_of(&e).map_err(|x| x.to_string())?.norm();
    let pp = pp_bound_with_seed(&e, seed);
    check(pp.lambda >= bound - 1e-9, || format!("λ = {} < ‖Ind‖⁻¹ = {bound}", pp.lambda))?;
    check(pp.sweep_lambda >= pp.lambda - 1e-9, || format!("sweep {} below optimum {}", pp.sweep_lambda, pp.lambda))
}

/// `{x : E(xy) = E(x)E(y) ∀y} = ι(N)`.
pub fn multiplicative_domain_is_n(k: usize, seed: u64) -> Result<(), String> {
    let e = random_e(k, seed);
    let inc = e.inclusion();
    let dom: Vec<linalg::CVec> = multiplicative_domain(&e).iter().map(|x| x.coords()).collect();
    let n: Vec<linalg::CVec> = matrix_unit_basis(inc.n()).iter().map(|u| inc.apply(u).unwrap().coords()).collect();
    let dn = inc.n().dim();
    check(dom.len() == dn, || format!("domain has dimension {}, N has {dn}", dom.len()))?;
    let union: Vec<linalg::CVec> = dom.iter().chain(&n).cloned().collect();
    let r = linalg::span_rank(&union);
    check(r == dn, || format!("domain and ι(N) span {r} dimensions, expected {dn}"))
}

/// Index values are central and `≥ 1`, for `E` and along its dual sequence.
pub fn index_central(k: usize, seed: u64) -> Result<(), String> {
    let e = random_e(k, seed);
    let basis = pp_basis(&e).map_err(|x| x.to_string())?;
    let ind = basis.index_element(&e);
    let m = e.inclusion().m();
    let comm = matrix_unit_basis(m).iter().map(|u| u.commutator(&ind).norm()).fold(0.0, f64::max);
    check(comm <= 1e-8 * ind.norm().max(1.0), || format!("Ind(E) commutator {comm:.3e}"))?;
    let rep = iterate_duals(&e, 6, 1e-10).map_err(|x| x.to_string())?;
    let low = rep.sequence.iter().flat_map(|s| s.values.iter().copied()).fold(f64::INFINITY, f64::min);
    check(low >= 1.0 - 1e-9, || format!("index value {low} below 1"))
}

/// Even iterates in `Z(M)`, odd ones in `ι(Z(N))`.
pub fn parity_containment(k: usize, seed: u64) -> Result<(), String> {
    let e = random_e(k, seed);
    let rep = iterate_duals(&e, 10, 1e-10).map_err(|x| x.to_string())?;
    check(rep.parity_residual <= 1e-8, || format!("parity residual {:.3e}", rep.parity_residual))
}

pub type Property = fn(usize, u64) -> Result<(), String>;

pub const PROPERTIES: [(&str, Property); 6] = [
    ("interchange law", interchange),
    ("PP expansion identity", pp_expansion),
    ("PP bound", pp_bound),
    ("multiplicative domain", multiplicative_domain_is_n),
    ("index centrality and ≥ 1", index_central),
    ("parity containment", parity_containment),
];

//! Solutions `(r, r̄)` of the conjugate equations for `ι` and `ῑ` attached to
//! a conditional expectation, and the closed diagrams built from them.
//!
//! `ῑι` is identified with `L²(M, Tr)` by multiplication, so `r` is the map
//! `n̂ ↦ (ι(n)ξ)^` with `ξ = D_φ^{1/2}` rescaled to make `r` isometric.

use std::sync::Arc;

use serde::Serialize;

use super::intertwiner::{Category, Intertwiner};
use super::word::{Label, Object, Word};
use crate::algebra::{AlgebraElement, CentralElement};
use crate::error::{Error, Result};
use crate::expectation::{left_multiplication, ConditionalExpectation};
use crate::inclusion::Inclusion;
use crate::index::{index_of, minimize_index};
use crate::linalg::{self, c, CMat, C64};
use crate::tower::phi_density;

/// Residual allowed for the least-squares solve of `r̄`.
pub const RBAR_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct DualityPair {
    expectation: ConditionalExpectation,
    cat: Arc<Category>,
    theta: Arc<CMat>,
    pub r: Intertwiner,
    pub rbar: Intertwiner,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConjugateResiduals {
    /// `‖(r̄*⊗1_ι)(1_ι⊗r) − 1_ι‖`.
    pub iota: f64,
    /// `‖(r*⊗1_ῑ)(1_ῑ⊗r̄) − 1_ῑ‖`.
    pub iota_bar: f64,
}

impl ConjugateResiduals {
    pub fn max(&self) -> f64 {
        self.iota.max(self.iota_bar)
    }
}

pub fn word_theta() -> Word {
    Word::parse("ibar i").expect("valid word")
}

pub fn word_gamma() -> Word {
    Word::parse("i ibar").expect("valid word")
}

/// Unitary from the canonical realization of `ῑι` onto `L²(M, Tr)` in matrix-unit coordinates.
pub fn theta_unitary(cat: &Category) -> CMat {
    let inc = cat.inclusion();
    let layout = cat.layout(&word_theta());
    let shape = layout.shape();
    let (n_dims, m) = (inc.n().block_dims(), inc.m());
    let lambda = inc.lambda();
    let offset = |a: usize, b: usize, copy: usize| -> usize {
        (0..a).map(|aa| lambda[aa][b] * n_dims[aa]).sum::<usize>() + copy * n_dims[a]
    };
    let mut out = CMat::zeros(m.dim(), shape.full_dim());
    for a in 0..n_dims.len() {
        for a2 in 0..n_dims.len() {
            for (p, Label { path, corners }) in layout.labels(a, a2).iter().enumerate() {
                let b = path[0];
                for i in 0..n_dims[a] {
                    for j in 0..n_dims[a2] {
                        let mut unit = CMat::zeros(m.block_dims()[b], m.block_dims()[b]);
                        unit[(offset(a, b, corners[0]) + i, offset(a2, b, corners[1]) + j)] = c(1.0);
                        if let Some(us) = inc.twists() {
                            unit = &us[b] * unit * us[b].adjoint();
                        }
                        let blocks = m
                            .block_dims()
                            .iter()
                            .enumerate()
                            .map(|(k, &d)| if k == b { unit.clone() } else { CMat::zeros(d, d) })
                            .collect();
                        let x = AlgebraElement::from_blocks(m, blocks).expect("block shapes");
                        out.set_column(shape.full_index(a, a2, i, p, j), &x.coords());
                    }
                }
            }
        }
    }
    out
}

fn flatten(t: &Intertwiner, out: &mut Vec<C64>) {
    for b in t.blocks().iter().flatten() {
        out.extend(b.iter().copied());
    }
}

fn isometry_vector(e: &ConditionalExpectation) -> Result<AlgebraElement> {
    let total: usize = e.inclusion().n().block_dims().iter().sum();
    let d = phi_density(e)?;
    Ok(d.hermitian_fn(move |v| (v.max(0.0) * total as f64).sqrt()))
}

fn build_r(cat: &Arc<Category>, theta: &CMat, xi: &AlgebraElement) -> Result<Intertwiner> {
    let inc = cat.inclusion();
    let n = inc.n();
    let unit = Word::unit(Object::N);
    let mut full = CMat::zeros(theta.ncols(), n.dim());
    for col in 0..n.dim() {
        let (k, i, j) = n.unit_of_index(col);
        let img = inc.apply(&AlgebraElement::matrix_unit(n, k, i, j))?.mul(xi);
        full.set_column(col, &(theta.adjoint() * img.coords()));
    }
    let (r, residual) = Intertwiner::from_full(cat, &unit, &word_theta(), &full)?;
    if residual > RBAR_TOL {
        return Err(Error::Inconsistent(residual));
    }
    Ok(r)
}

/// The unique `r̄` completing `r` to a solution of the conjugate equations,
/// with the least-squares residual.
pub fn solve_rbar(cat: &Arc<Category>, r: &Intertwiner) -> Result<(Intertwiner, f64)> {
    let (iota, iota_bar, gamma) = (Word::iota(), Word::iota_bar(), word_gamma());
    let unit_m = Word::unit(Object::M);
    let id_i = Intertwiner::identity(cat, &iota);
    let id_ib = Intertwiner::identity(cat, &iota_bar);
    let left = id_i.tensor(r)?;
    let right = r.tensor(&id_ib)?;
    let zero = Intertwiner::zero(cat, &gamma, &unit_m)?;
    let mut columns = Vec::new();
    let mut basis = Vec::new();
    for b in 0..zero.blocks().len() {
        for p in 0..zero.block(b, b).ncols() {
            let mut blocks = zero.blocks().to_vec();
            blocks[b][b][(0, p)] = c(1.0);
            let y = Intertwiner::new(cat, &gamma, &unit_m, blocks)?;
            let mut col = Vec::new();
            flatten(&y.tensor(&id_i)?.compose(&left)?, &mut col);
            flatten(&id_ib.tensor(&y)?.compose(&right)?, &mut col);
            columns.push(col);
            basis.push(y);
        }
    }
    let mut rhs = Vec::new();
    flatten(&id_i, &mut rhs);
    flatten(&id_ib, &mut rhs);
    let a = CMat::from_fn(rhs.len(), columns.len(), |i, j| columns[j][i]);
    let b = CMat::from_column_slice(rhs.len(), 1, &rhs);
    let (x, residual) = linalg::lstsq(&a, &b);
    if residual > RBAR_TOL {
        return Err(Error::Inconsistent(residual));
    }
    let mut ystar = zero;
    for (k, y) in basis.iter().enumerate() {
        ystar = ystar.add(&y.scale(x[(k, 0)]))?;
    }
    Ok((ystar.adjoint(), residual))
}

/// `(r, r̄)` for `E`, with `r` the isometric inclusion `L²N → L²M`.
pub fn build_duality(e: &ConditionalExpectation) -> Result<DualityPair> {
    let cat = Category::new(e.inclusion().clone());
    let theta = Arc::new(theta_unitary(&cat));
    let xi = isometry_vector(e)?;
    let r = build_r(&cat, &theta, &xi)?;
    let (rbar, _) = solve_rbar(&cat, &r)?;
    Ok(DualityPair { expectation: e.clone(), cat, theta, r, rbar })
}

pub fn check_conjugate_equations(pair: &DualityPair) -> Result<ConjugateResiduals> {
    let cat = &pair.cat;
    let id_i = Intertwiner::identity(cat, &Word::iota());
    let id_ib = Intertwiner::identity(cat, &Word::iota_bar());
    let first = pair.rbar.adjoint().tensor(&id_i)?.compose(&id_i.tensor(&pair.r)?)?;
    let second = pair.r.adjoint().tensor(&id_ib)?.compose(&id_ib.tensor(&pair.rbar)?)?;
    Ok(ConjugateResiduals { iota: first.distance(&id_i)?, iota_bar: second.distance(&id_ib)? })
}

fn central_of(inc: &Inclusion, object: Object, t: &Intertwiner) -> Result<CentralElement> {
    let alg = match object {
        Object::N => inc.n(),
        Object::M => inc.m(),
    };
    CentralElement::new(alg, t.central_values()?)
}

impl DualityPair {
    /// Assembles a pair without checking the conjugate equations.
    pub fn from_parts(expectation: ConditionalExpectation, r: Intertwiner, rbar: Intertwiner) -> Result<Self> {
        let cat = r.category().clone();
        if r.source() != &Word::unit(Object::N) || r.target() != &word_theta() {
            return Err(Error::Type(format!("r must map 1N to ibar i, got `{}` ⇒ `{}`", r.source(), r.target())));
        }
        if rbar.source() != &Word::unit(Object::M) || rbar.target() != &word_gamma() {
            return Err(Error::Type(format!(
                "rbar must map 1M to i ibar, got `{}` ⇒ `{}`",
                rbar.source(),
                rbar.target()
            )));
        }
        let theta = Arc::new(theta_unitary(&cat));
        Ok(Self { expectation, cat, theta, r, rbar })
    }

    pub fn expectation(&self) -> &ConditionalExpectation {
        &self.expectation
    }

    pub fn category(&self) -> &Arc<Category> {
        &self.cat
    }

    /// `ῑι ≅ L²(M, Tr)`.
    pub fn theta_unitary(&self) -> &CMat {
        &self.theta
    }

    /// `r*r ∈ Z(N)`.
    pub fn r_norm(&self) -> Result<CentralElement> {
        central_of(self.cat.inclusion(), Object::N, &self.r.adjoint().compose(&self.r)?)
    }

    /// `r̄*r̄ ∈ Z(M)`.
    pub fn rbar_norm(&self) -> Result<CentralElement> {
        central_of(self.cat.inclusion(), Object::M, &self.rbar.adjoint().compose(&self.rbar)?)
    }

    /// `(c·r, c⁻¹·r̄)`.
    pub fn rescale(&self, s: f64) -> Self {
        Self { r: self.r.scale(c(s)), rbar: self.rbar.scale(c(1.0 / s)), ..self.clone() }
    }

    /// `r′ = r∘u` for the central unitary `u = Σ e^{iθ_α} p_α` of `N`, with
    /// `r̄′` re-solved.
    pub fn twisted(&self, phases: &[f64]) -> Result<Self> {
        let values: Vec<C64> = phases.iter().map(|&t| C64::from_polar(1.0, t)).collect();
        let u = Intertwiner::central(&self.cat, Object::N, &values)?;
        let r = self.r.compose(&u)?;
        let (rbar, _) = solve_rbar(&self.cat, &r)?;
        Ok(Self { r, rbar, ..self.clone() })
    }
}

/// `ι⁻¹E(m) = (r*r)⁻¹ r* λ(m) r`, read off on `L²N`, with the largest
/// deviation from a left multiplication.
pub fn recover_element(pair: &DualityPair, m: &AlgebraElement) -> Result<(AlgebraElement, f64)> {
    let inc = pair.cat.inclusion();
    let n = inc.n();
    let r_full = pair.theta.as_ref() * pair.r.to_full();
    let k = r_full.adjoint() * left_multiplication(m) * &r_full;
    let rr = pair.r_norm()?;
    let inv: Vec<C64> = rr.scalars().iter().map(|z| 1.0 / z).collect();
    let inv = CentralElement::new(n, inv)?.to_element();
    let k = left_multiplication(&inv) * k;
    let x = AlgebraElement::from_coords(n, &(&k * AlgebraElement::identity(n).coords()));
    let residual = linalg::spectral_norm(&(&k - left_multiplication(&x)));
    Ok((x, residual))
}

/// The expectation `m ↦ ι((r*r)⁻¹ r* λ(m) r)`.
pub fn expectation_from_duality(pair: &DualityPair) -> Result<ConditionalExpectation> {
    let inc = pair.cat.inclusion();
    let m = inc.m();
    let mut map = CMat::zeros(m.dim(), m.dim());
    let mut worst: f64 = 0.0;
    for col in 0..m.dim() {
        let (k, i, j) = m.unit_of_index(col);
        let (x, res) = recover_element(pair, &AlgebraElement::matrix_unit(m, k, i, j))?;
        worst = worst.max(res);
        map.set_column(col, &inc.apply(&x)?.coords());
    }
    if worst > RBAR_TOL {
        return Err(Error::NotExpectation(format!(
            "r*λ(m)r is not a left multiplication on L²N (residual {worst:.3e})"
        )));
    }
    ConditionalExpectation::from_matrix(inc, pair.expectation.reference(), map)
}

/// `r̄* (1_ι ⊗ r*r ⊗ 1_ῑ) r̄ ∈ End(1_M) ≅ Z(M)`.
pub fn loop_index(pair: &DualityPair) -> Result<CentralElement> {
    let cat = &pair.cat;
    let rr = pair.r.adjoint().compose(&pair.r)?;
    let middle = Intertwiner::identity(cat, &Word::iota())
        .tensor(&rr)?
        .tensor(&Intertwiner::identity(cat, &Word::iota_bar()))?;
    let value = pair.rbar.adjoint().compose(&middle)?.compose(&pair.rbar)?;
    central_of(cat.inclusion(), Object::M, &value)
}

/// `r* (1_ῑ ⊗ Ind ⊗ 1_ι) r / r*r ∈ Z(N)` with `Ind` the double loop.
pub fn conjugate_loop_index(pair: &DualityPair) -> Result<CentralElement> {
    let cat = &pair.cat;
    let ind = loop_index(pair)?;
    let z = Intertwiner::central(cat, Object::M, ind.scalars())?;
    let middle = Intertwiner::identity(cat, &Word::iota_bar())
        .tensor(&z)?
        .tensor(&Intertwiner::identity(cat, &Word::iota()))?;
    let value = pair.r.adjoint().compose(&middle)?.compose(&pair.r)?;
    let rr = pair.r_norm()?;
    let scalars = value.central_values()?.iter().zip(rr.scalars()).map(|(v, n)| v / n).collect();
    CentralElement::new(cat.inclusion().n(), scalars)
}

#[derive(Debug, Clone, Serialize)]
pub struct StandardReport {
    pub ind0: f64,
    pub r_norm: Vec<f64>,
    pub rbar_norm: Vec<f64>,
    /// `max |r*r − √ind₀|, |r̄*r̄ − √ind₀|` over blocks.
    pub balance_residual: f64,
    /// `‖r*r‖·‖r̄*r̄‖ − ind₀`.
    pub product_residual: f64,
    pub standard: bool,
}

pub const STANDARD_TOL: f64 = 1e-6;

/// Rescales a pair of a minimal expectation with scalar index `ind0` to the
/// balanced normalization `r*r = r̄*r̄ = √ind₀`.
pub fn standardize_with(pair: &DualityPair, ind0: f64) -> Result<(DualityPair, StandardReport)> {
    let ind = index_of(&pair.expectation)?;
    if ind.gap() > STANDARD_TOL * ind.norm() {
        return Err(Error::Refused(format!("index {:?} is not scalar", ind.blocks)));
    }
    if (ind.norm() - ind0).abs() > STANDARD_TOL * ind0 {
        return Err(Error::Refused(format!(
            "expectation is not minimal: index {} differs from the minimal index {ind0}",
            ind.norm()
        )));
    }
    let scaled = pair.rescale(ind0.powf(0.25));
    let rn: Vec<f64> = scaled.r_norm()?.real_values();
    let rbn: Vec<f64> = scaled.rbar_norm()?.real_values();
    let target = ind0.sqrt();
    let balance_residual = rn.iter().chain(&rbn).map(|v| (v - target).abs()).fold(0.0, f64::max);
    let sup = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let product_residual = (sup(&rn) * sup(&rbn) - ind0).abs();
    let standard = balance_residual <= STANDARD_TOL * target.max(1.0) && product_residual <= STANDARD_TOL * ind0;
    let report = StandardReport { ind0, r_norm: rn, rbar_norm: rbn, balance_residual, product_residual, standard };
    Ok((scaled, report))
}

/// As [`standardize_with`], computing `ind₀` by minimizing the index.
pub fn standardize(pair: &DualityPair) -> Result<(DualityPair, StandardReport)> {
    let e = &pair.expectation;
    let min = minimize_index(e.inclusion(), e.reference())?;
    standardize_with(pair, min.ind0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::TraceVector;
    use crate::expectation::random_expectation;
    use crate::fixtures;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * y.abs().max(1.0))
    }

    #[test]
    fn theta_unitary_is_unitary() {
        for inc in fixtures::all() {
            let u = theta_unitary(&Category::new(inc));
            let n = u.ncols();
            assert_eq!(u.nrows(), n);
            assert!(linalg::spectral_norm(&(u.adjoint() * &u - CMat::identity(n, n))) < 1e-12);
        }
    }

    #[test]
    fn trace_examples() {
        let pair = build_duality(&fixtures::trace_of(&fixtures::f1())).unwrap();
        assert!(close(&pair.r_norm().unwrap().real_values(), &[1.0], 1e-12));
        assert!(close(&pair.rbar_norm().unwrap().real_values(), &[4.0], 1e-10));
        assert!(check_conjugate_equations(&pair).unwrap().max() < 1e-9);
        let p = 0.3;
        let pair = build_duality(&fixtures::f3_expectation(p)).unwrap();
        assert!(close(&pair.rbar_norm().unwrap().real_values(), &[1.0 / p, 1.0 / (1.0 - p)], 1e-10));
        assert!(close(&conjugate_loop_index(&pair).unwrap().real_values(), &[2.0], 1e-10));
        let pair = build_duality(&fixtures::f3_expectation(0.25)).unwrap();
        assert!(close(&loop_index(&pair).unwrap().real_values(), &[4.0, 4.0 / 3.0], 1e-10));
        let pair = build_duality(&fixtures::trace_of(&fixtures::f4())).unwrap();
        assert!(close(&loop_index(&pair).unwrap().real_values(), &[10.0, 15.0], 1e-10));
        assert!(close(&conjugate_loop_index(&pair).unwrap().real_values(), &[13.0], 1e-10));
        let pair = build_duality(&fixtures::trace_of(&fixtures::f5())).unwrap();
        assert!(close(&loop_index(&pair).unwrap().real_values(), &[1.0], 1e-10));
    }

    #[test]
    fn random_expectations_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for inc in fixtures::all() {
            for _ in 0..4 {
                let e = random_expectation(&inc, &TraceVector::uniform(inc.m()), 1.0, &mut rng).unwrap();
                let pair = build_duality(&e).unwrap();
                assert!(check_conjugate_equations(&pair).unwrap().max() < 1e-9);
                let back = expectation_from_duality(&pair).unwrap();
                assert!(back.distance(&e) < 1e-9);
                let ind = index_of(&e).unwrap();
                assert!(close(&loop_index(&pair).unwrap().real_values(), &ind.blocks, 1e-8));
            }
        }
    }

    #[test]
    fn rescaling_and_twists() {
        let e = fixtures::f3_expectation(0.3);
        let pair = build_duality(&e).unwrap();
        let scaled = pair.rescale(2.0);
        assert!(check_conjugate_equations(&scaled).unwrap().max() < 1e-9);
        assert!(close(&loop_index(&scaled).unwrap().real_values(), &loop_index(&pair).unwrap().real_values(), 1e-10));
        assert!(expectation_from_duality(&scaled).unwrap().distance(&e) < 1e-9);
        assert!(close(&scaled.rbar_norm().unwrap().real_values(), &[1.0 / 0.3 / 4.0, 1.0 / 0.7 / 4.0], 1e-10));
        let e4 = fixtures::trace_of(&fixtures::f2());
        let pair = build_duality(&e4).unwrap();
        let twisted = pair.twisted(&[0.4, -1.3]).unwrap();
        assert!(twisted.r.distance(&pair.r).unwrap() > 0.1);
        assert!(check_conjugate_equations(&twisted).unwrap().max() < 1e-9);
        assert!(expectation_from_duality(&twisted).unwrap().distance(&e4) < 1e-9);
    }

    #[test]
    fn corrupted_rbar_is_reported() {
        let pair = build_duality(&fixtures::trace_of(&fixtures::f1())).unwrap();
        let mut blocks = pair.rbar.blocks().to_vec();
        blocks[0][0][(0, 0)] += c(0.1);
        let bad = Intertwiner::new(pair.category(), pair.rbar.source(), pair.rbar.target(), blocks).unwrap();
        let bad = DualityPair::from_parts(pair.expectation().clone(), pair.r.clone(), bad).unwrap();
        let res = check_conjugate_equations(&bad).unwrap();
        // The perturbed entry meets r = 1̂/√2.
        assert!((res.iota - 0.1 / 2f64.sqrt()).abs() < 1e-9, "{res:?}");
        assert!((res.iota_bar - 0.1 / 2f64.sqrt()).abs() < 1e-9, "{res:?}");
    }

    #[test]
    fn standard_solutions() {
        let pair = build_duality(&fixtures::trace_of(&fixtures::f1())).unwrap();
        let (std, report) = standardize_with(&pair, 4.0).unwrap();
        assert!(report.standard, "{report:?}");
        assert!(close(&std.r_norm().unwrap().real_values(), &[2.0], 1e-9));
        let pair = build_duality(&fixtures::f1_expectation(0.3)).unwrap();
        assert!(matches!(standardize_with(&pair, 4.0), Err(Error::Refused(_))));
        let pair = build_duality(&fixtures::trace_of(&fixtures::f4())).unwrap();
        assert!(matches!(standardize_with(&pair, 13.0), Err(Error::Refused(_))));
    }
}

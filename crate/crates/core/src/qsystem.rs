//! Q-systems `(θ, x, w)` of finite-index expectations, their axioms, and the
//! reconstruction of the extension inside `B(H_θ)`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraElement, MultiMatrixAlgebra};
use crate::bimodule::duality::{word_theta, DualityPair};
use crate::bimodule::fusion::{fuse, Bimodule};
use crate::bimodule::intertwiner::{Category, Intertwiner};
use crate::bimodule::word::{Label, Object, Word};
use crate::error::{Error, Result};
use crate::expectation::{left_multiplication, ExpectationReport};
use crate::index::{basis_index, expansion_residual, pp_basis_generic};
use crate::linalg::{self, c, CMat, C64};
use crate::serial;
use crate::tower::verify_operator_expectation;

pub const QSYSTEM_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct QSystem {
    cat: Arc<Category>,
    /// `θθ ⇒ θ`.
    pub x: Intertwiner,
    /// `1_N ⇒ θ`.
    pub w: Intertwiner,
}

#[derive(Debug, Clone, Serialize)]
pub struct QSystemReport {
    pub associativity: f64,
    pub unitality: f64,
    pub frobenius: f64,
    /// Smallest block value of `w*w`.
    pub invertibility_margin: f64,
    /// Conjugate-equation residual of `x*∘w` as a self-conjugation of `θ`.
    pub self_duality: f64,
    /// Smallest eigenvalue of `x∘x*` on `θ`.
    pub xx_star_min: f64,
}

impl QSystemReport {
    pub fn max_residual(&self) -> f64 {
        self.associativity.max(self.unitality).max(self.frobenius).max(self.self_duality)
    }

    pub fn accepted(&self, tol: f64) -> bool {
        self.max_residual() <= tol && self.invertibility_margin > linalg::RANK_CUTOFF
    }
}

fn theta_theta() -> Word {
    Word::parse("ibar i ibar i").expect("valid word")
}

impl QSystem {
    pub fn new(x: Intertwiner, w: Intertwiner) -> Result<Self> {
        let theta = word_theta();
        if x.source() != &theta_theta() || x.target() != &theta {
            return Err(Error::Type(format!("x must map `ibar i ibar i` to `ibar i`, got `{}` ⇒ `{}`", x.source(), x.target())));
        }
        if w.source() != &Word::unit(Object::N) || w.target() != &theta {
            return Err(Error::Type(format!("w must map `1N` to `ibar i`, got `{}` ⇒ `{}`", w.source(), w.target())));
        }
        Ok(Self { cat: x.category().clone(), x, w })
    }

    pub fn category(&self) -> &Arc<Category> {
        &self.cat
    }

    /// `w*w` per N-block.
    pub fn unit_norm(&self) -> Result<Vec<C64>> {
        self.w.adjoint().compose(&self.w)?.central_values()
    }
}

/// `θ = ῑι`, `w = r`, `x = 1_ῑ ⊗ r̄* ⊗ 1_ι`.
pub fn qsystem_from_pair(pair: &DualityPair) -> Result<QSystem> {
    let cat = pair.category();
    let x = Intertwiner::identity(cat, &Word::iota_bar())
        .tensor(&pair.rbar.adjoint())?
        .tensor(&Intertwiner::identity(cat, &Word::iota()))?;
    QSystem::new(x, pair.r.clone())
}

/// As [`qsystem_from_pair`], rejecting Q-systems whose axioms fail.
pub fn qsystem_from_expectation(pair: &DualityPair) -> Result<(QSystem, QSystemReport)> {
    let q = qsystem_from_pair(pair)?;
    let report = verify_qsystem(&q)?;
    if !report.accepted(QSYSTEM_TOL) {
        return Err(Error::Tolerance(format!("Q-system axioms fail: {report:?}")));
    }
    Ok((q, report))
}

/// The underlying bimodule of `θ`, with its canonical left and right actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaData {
    pub dims: Bimodule,
    /// Only `"canonical"` is understood.
    pub actions: String,
}

/// Exchange form of a Q-system: full matrices of `x` and `w` on the
/// realizations of `θθ`, `θ` and `1_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QSystemData {
    pub theta: ThetaData,
    pub x: serial::Matrix,
    pub w: serial::Matrix,
}

impl QSystem {
    pub fn to_data(&self) -> QSystemData {
        QSystemData {
            theta: ThetaData { dims: self.cat.layout(&word_theta()).shape().clone(), actions: "canonical".into() },
            x: serial::to_matrix(&self.x.to_full()),
            w: serial::to_matrix(&self.w.to_full()),
        }
    }

    /// Reads a Q-system over the inclusion of `cat`; the matrices must
    /// intertwine the canonical actions to within `tol`.
    pub fn from_data(cat: &Arc<Category>, data: &QSystemData, tol: f64) -> Result<Self> {
        let expected = cat.layout(&word_theta()).shape().clone();
        if data.theta.actions != "canonical" {
            return Err(Error::Manifest(format!("unsupported theta actions `{}`", data.theta.actions)));
        }
        if data.theta.dims != expected {
            return Err(Error::Manifest(format!("theta dims {:?} do not match the inclusion ({expected:?})", data.theta.dims)));
        }
        let read = |rows: &serial::Matrix, source: &Word, what: &str| -> Result<Intertwiner> {
            let m = serial::from_matrix(rows, what)?;
            let (t, res) = Intertwiner::from_full(cat, source, &word_theta(), &m)?;
            if res > tol {
                return Err(Error::Tolerance(format!("{what} is not a bimodule map (residual {res:.3e})")));
            }
            Ok(t)
        };
        Self::new(read(&data.x, &theta_theta(), "x")?, read(&data.w, &Word::unit(Object::N), "w")?)
    }
}

pub fn verify_qsystem(q: &QSystem) -> Result<QSystemReport> {
    let cat = &q.cat;
    let id = Intertwiner::identity(cat, &word_theta());
    let x = &q.x;
    let xs = x.adjoint();
    let associativity = x.compose(&x.tensor(&id)?)?.distance(&x.compose(&id.tensor(x)?)?)?;
    let unitality = x
        .compose(&q.w.tensor(&id)?)?
        .distance(&id)?
        .max(x.compose(&id.tensor(&q.w)?)?.distance(&id)?);
    let middle = xs.compose(x)?;
    let frobenius = x
        .tensor(&id)?
        .compose(&id.tensor(&xs)?)?
        .distance(&middle)?
        .max(id.tensor(x)?.compose(&xs.tensor(&id)?)?.distance(&middle)?);
    let invertibility_margin = q.unit_norm()?.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    let rho = xs.compose(&q.w)?;
    let rho_s = rho.adjoint();
    let self_duality = rho_s
        .tensor(&id)?
        .compose(&id.tensor(&rho)?)?
        .distance(&id)?
        .max(id.tensor(&rho_s)?.compose(&rho.tensor(&id)?)?.distance(&id)?);
    let xx_star = x.compose(&xs)?;
    let xx_star_min = xx_star
        .blocks()
        .iter()
        .flatten()
        .filter(|b| b.nrows() > 0)
        .map(linalg::min_eigenvalue)
        .fold(f64::INFINITY, f64::min);
    Ok(QSystemReport { associativity, unitality, frobenius, invertibility_margin, self_duality, xx_star_min })
}

/// `(M̂ ⊃ ι̂(N), Ê)` acting on `H_θ`, with `M̂ = λ(A)` for the algebra
/// `A = H_θ`, `a·b = x(a ⊗ b)`.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// `λ(ε_k)` for the standard basis `ε_k` of `H_θ`.
    pub mhat: Vec<CMat>,
    /// `ι̂` of the matrix units of N, in coordinate order.
    pub iota_hat: Vec<CMat>,
    pub unit: linalg::CVec,
    n_alg: Arc<MultiMatrixAlgebra>,
    w_full: CMat,
    /// `(w*w)⁻¹` as left multiplication on `L²N`.
    z_inv: CMat,
    z_sqrt: CMat,
    /// Basis vectors of `H_θ` with right index `j = 0`; they generate `H_θ`
    /// as a right N-module.
    module_basis: Vec<usize>,
    pub unit_residual: f64,
    pub star_residual: f64,
    pub containment_residual: f64,
    pub invariance_residual: f64,
}

/// Matrix from the canonical `θ ⊠ θ` to the realization of the word `θθ`.
fn fusion_to_word(cat: &Category) -> Result<CMat> {
    let theta = cat.layout(&word_theta());
    let tt = cat.layout(&theta_theta());
    let fused = fuse(theta.shape(), theta.shape())?;
    let shape = &fused.bimodule;
    if shape != tt.shape() {
        return Err(Error::Degenerate("fused θ⊠θ does not match the word realization".into()));
    }
    let n = shape.full_dim();
    let mut p = CMat::zeros(n, n);
    let k = shape.left_dims.len();
    for a in 0..k {
        for g in 0..k {
            let mut corner = 0;
            for b in 0..k {
                let (lx, ly) = (theta.labels(a, b), theta.labels(b, g));
                for x in lx {
                    for y in ly {
                        let label = Label {
                            path: [x.path.as_slice(), &[b], y.path.as_slice()].concat(),
                            corners: [x.corners.as_slice(), y.corners.as_slice()].concat(),
                        };
                        let pos = tt.position(a, g, &label).expect("label of θθ");
                        for i in 0..shape.left_dims[a] {
                            for j in 0..shape.right_dims[g] {
                                p[(shape.full_index(a, g, i, pos, j), shape.full_index(a, g, i, corner, j))] = c(1.0);
                            }
                        }
                        corner += 1;
                    }
                }
            }
        }
    }
    Ok(p * &fused.q)
}

fn span_residual(basis: &CMat, target: &CMat) -> f64 {
    let v = linalg::vectorize(target);
    let (coef, _) = linalg::lstsq(basis, &CMat::from_column_slice(v.len(), 1, v.as_slice()));
    linalg::vec_norm(&(basis * coef.column(0) - &v)) / linalg::vec_norm(&v).max(1.0)
}

pub fn reconstruct_extension(q: &QSystem) -> Result<Reconstruction> {
    let cat = &q.cat;
    let inc = cat.inclusion().clone();
    let n_alg = inc.n();
    let theta = cat.layout(&word_theta());
    let d = theta.full_dim();
    let xq = q.x.to_full() * fusion_to_word(cat)?;
    let mhat: Vec<CMat> = (0..d).map(|k| xq.columns(k * d, d).into_owned()).collect();
    let w_full = q.w.to_full();
    let unit = &w_full * AlgebraElement::identity(n_alg).coords();
    let lam = |v: &linalg::CVec| -> CMat { mhat.iter().zip(v.iter()).fold(CMat::zeros(d, d), |acc, (m, s)| acc + m * *s) };
    let one = CMat::identity(d, d);
    let mut unit_residual = linalg::spectral_norm(&(lam(&unit) - &one));
    for (k, m) in mhat.iter().enumerate() {
        let ek = linalg::CVec::from_fn(d, |i, _| if i == k { c(1.0) } else { c(0.0) });
        unit_residual = unit_residual.max(linalg::vec_norm(&(m * &unit - ek)));
    }
    let span = CMat::from_columns(&mhat.iter().map(linalg::vectorize).collect::<Vec<_>>());
    let star_residual = mhat.iter().map(|m| span_residual(&span, &m.adjoint())).fold(0.0, f64::max);
    let shape = theta.shape();
    let iota_hat: Vec<CMat> = (0..n_alg.dim())
        .map(|col| {
            let (k, i, j) = n_alg.unit_of_index(col);
            shape.left_action(AlgebraElement::matrix_unit(n_alg, k, i, j).blocks())
        })
        .collect();
    let containment_residual = iota_hat.iter().map(|t| span_residual(&span, t)).fold(0.0, f64::max);
    let zvals = q.unit_norm()?;
    if zvals.iter().any(|z| z.re <= linalg::RANK_CUTOFF) {
        return Err(Error::Degenerate(format!("w*w is not invertible: {zvals:?}")));
    }
    let zelem = |f: &dyn Fn(f64) -> f64| -> CMat {
        let s: Vec<C64> = zvals.iter().map(|z| c(f(z.re))).collect();
        left_multiplication(&AlgebraElement::block_scalars(n_alg, &s))
    };
    let z_inv = zelem(&|v| 1.0 / v);
    let z_sqrt = zelem(&|v| v.sqrt());
    let mut module_basis = Vec::new();
    for a in 0..shape.left_dims.len() {
        for g in 0..shape.right_dims.len() {
            for i in 0..shape.left_dims[a] {
                for cc in 0..shape.mult[a][g] {
                    module_basis.push(shape.full_index(a, g, i, cc, 0));
                }
            }
        }
    }
    let mut rec = Reconstruction {
        mhat,
        iota_hat,
        unit,
        n_alg: n_alg.clone(),
        w_full,
        z_inv,
        z_sqrt,
        module_basis,
        unit_residual,
        star_residual,
        containment_residual,
        invariance_residual: 0.0,
    };
    let mut invariance: f64 = 0.0;
    for m in &rec.mhat {
        let (_, res) = rec.read_n(m);
        invariance = invariance.max(res);
    }
    rec.invariance_residual = invariance;
    if rec.star_residual > QSYSTEM_TOL || rec.unit_residual > QSYSTEM_TOL || rec.containment_residual > QSYSTEM_TOL {
        return Err(Error::Tolerance(format!(
            "λ(A) is not a unital *-algebra containing ι̂(N): unit {:.3e}, star {:.3e}, containment {:.3e}",
            rec.unit_residual, rec.star_residual, rec.containment_residual
        )));
    }
    if rec.invariance_residual > QSYSTEM_TOL {
        return Err(Error::Tolerance(format!(
            "w*λ(a)w is not a left multiplication on L²N ({:.3e})",
            rec.invariance_residual
        )));
    }
    Ok(rec)
}

/// Block decomposition of a finite-dimensional *-algebra of operators.
#[derive(Debug, Clone, Serialize)]
pub struct Structure {
    #[serde(skip)]
    /// Minimal central projections.
    pub projections: Vec<CMat>,
    pub block_dims: Vec<usize>,
    /// `Λ̂[α][k]`: multiplicity of N-block `α` in block `k`.
    pub lambda: Vec<Vec<usize>>,
}

fn rank_of_projection(p: &CMat) -> usize {
    (0..p.nrows()).map(|i| p[(i, i)].re).sum::<f64>().round() as usize
}

impl Reconstruction {
    pub fn dim(&self) -> usize {
        self.unit.len()
    }

    /// `n ∈ N` with `w*Tw = L(n)` on `L²N`, and the deviation from a left multiplication.
    pub fn read_n(&self, t: &CMat) -> (AlgebraElement, f64) {
        let k = self.w_full.adjoint() * t * &self.w_full;
        let x = AlgebraElement::from_coords(&self.n_alg, &(&k * AlgebraElement::identity(&self.n_alg).coords()));
        let res = linalg::spectral_norm(&(&k - left_multiplication(&x)));
        (x, res)
    }

    /// `ι̂(n)` on `H_θ`.
    pub fn iota(&self, n: &AlgebraElement) -> CMat {
        self.iota_hat.iter().zip(n.coords().iter()).fold(CMat::zeros(self.dim(), self.dim()), |acc, (t, s)| acc + t * *s)
    }

    /// `Ê(T) = ι̂((w*w)⁻¹ c_T)`.
    pub fn ehat(&self, t: &CMat) -> CMat {
        let (x, _) = self.read_n(t);
        let y = AlgebraElement::from_coords(&self.n_alg, &(&self.z_inv * x.coords()));
        self.iota(&y)
    }

    pub fn ehat_report(&self, seed: u64) -> ExpectationReport {
        verify_operator_expectation(&|t: &CMat| self.ehat(t), &self.iota_hat, &self.mhat, seed)
    }

    /// `ê = w (w*w)⁻¹ w*`.
    pub fn jones_projection(&self) -> CMat {
        &self.w_full * &self.z_inv * self.w_full.adjoint()
    }

    /// `max ‖ê T ê − Ê(T) ê‖` over the basis of `M̂`.
    pub fn jones_residual(&self) -> f64 {
        let e = self.jones_projection();
        self.mhat.iter().map(|t| linalg::spectral_norm(&(&e * t * &e - self.ehat(t) * &e))).fold(0.0, f64::max)
    }

    /// `Ind(Ê)` by Gram–Schmidt over the basis of `M̂`.
    pub fn index(&self) -> Result<CMat> {
        let one = CMat::identity(self.dim(), self.dim());
        let mut candidates = vec![one.clone()];
        candidates.extend(self.mhat.iter().cloned());
        let expect = |t: &CMat| self.ehat(t);
        let basis = pp_basis_generic(&expect, &candidates);
        let res = expansion_residual(&expect, &basis, &self.mhat);
        if res > QSYSTEM_TOL {
            return Err(Error::Degenerate(format!("Pimsner–Popa expansion in M̂ failed ({res:.3e})")));
        }
        Ok(basis_index(&basis, &one))
    }

    /// `y_k = λ(ε_k) ι̂((w*w)^{1/2})` over a right N-module basis `ε_k` of
    /// `H_θ`, the components of `x ∘ (1_θ ⊗ (w*w)^{1/2})`.
    pub fn pp_witness(&self) -> Vec<CMat> {
        let zs = self.iota(&AlgebraElement::from_coords(
            &self.n_alg,
            &(&self.z_sqrt * AlgebraElement::identity(&self.n_alg).coords()),
        ));
        self.module_basis.iter().map(|&k| &self.mhat[k] * &zs).collect()
    }

    /// `(‖Σ y_k ê y_k* − 1‖, expansion residual, ‖Σ y_k y_k* − Ind(Ê)‖)`.
    pub fn pp_witness_residuals(&self, ind: &CMat) -> (f64, f64, f64) {
        let y = self.pp_witness();
        let e = self.jones_projection();
        let one = CMat::identity(self.dim(), self.dim());
        let cover = y.iter().fold(CMat::zeros(self.dim(), self.dim()), |acc, yk| acc + yk * &e * yk.adjoint());
        let expansion = expansion_residual(&|t: &CMat| self.ehat(t), &y, &self.mhat);
        let sum = basis_index(&y, &one);
        (linalg::spectral_norm(&(cover - one)), expansion, linalg::spectral_norm(&(sum - ind)))
    }

    /// Center, minimal central projections, block sizes and `Λ̂` of `M̂ ⊃ ι̂(N)`.
    pub fn structure(&self, seed: u64) -> Result<Structure> {
        let d = self.dim();
        let k = self.mhat.len();
        let mut rows = Vec::new();
        for b in &self.mhat {
            let comm: Vec<linalg::CVec> = self.mhat.iter().map(|a| linalg::vectorize(&(a * b - b * a))).collect();
            rows.push(CMat::from_columns(&comm));
        }
        let mut system = CMat::zeros(rows.len() * d * d, k);
        for (i, r) in rows.iter().enumerate() {
            system.view_mut((i * d * d, 0), (d * d, k)).copy_from(r);
        }
        let center = linalg::nullspace(&system);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut generic = CMat::zeros(d, d);
        for v in &center {
            let z = self.mhat.iter().zip(v.iter()).fold(CMat::zeros(d, d), |acc, (m, s)| acc + m * *s);
            let (a, b): (f64, f64) = (rng.random_range(0.5..1.5), rng.random_range(0.5..1.5));
            generic += linalg::hermitian_part(&z) * c(a) + linalg::hermitian_part(&(z * C64::i())) * c(b);
        }
        let (vals, vecs) = linalg::eigh(&generic);
        let mut projections: Vec<CMat> = Vec::new();
        let mut start = 0;
        let spread = vals.iter().map(|v| v.abs()).fold(1.0, f64::max);
        for i in 1..=vals.len() {
            if i == vals.len() || vals[i] - vals[i - 1] > 1e-6 * spread {
                let v = vecs.columns(start, i - start);
                projections.push(v * v.adjoint());
                start = i;
            }
        }
        if projections.len() != center.len() {
            return Err(Error::Degenerate(format!(
                "center of dimension {} split into {} spectral projections",
                center.len(),
                projections.len()
            )));
        }
        let mut block_dims = Vec::new();
        let mut lambda = vec![vec![0; projections.len()]; self.n_alg.num_blocks()];
        for (kk, p) in projections.iter().enumerate() {
            let compressed: Vec<linalg::CVec> = self.mhat.iter().map(|m| linalg::vectorize(&(p * m * p))).collect();
            let dim = linalg::span_rank(&compressed);
            let dk = (dim as f64).sqrt().round() as usize;
            if dk * dk != dim {
                return Err(Error::Degenerate(format!("central summand of dimension {dim} is not a full matrix block")));
            }
            block_dims.push(dk);
            let mult = rank_of_projection(p) / dk;
            for (a, row) in lambda.iter_mut().enumerate() {
                let unit = self.iota(&AlgebraElement::matrix_unit(&self.n_alg, a, 0, 0));
                let r = rank_of_projection(&(&unit * p));
                row[kk] = r / mult.max(1);
            }
        }
        Ok(Structure { projections, block_dims, lambda })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundtripReport {
    pub axioms: QSystemReport,
    pub block_dims: Vec<usize>,
    /// Reconstructed block sizes, ordered to match the blocks of M.
    pub block_dims_hat: Vec<usize>,
    pub lambda: Vec<Vec<usize>>,
    pub lambda_hat: Vec<Vec<usize>>,
    pub index: Vec<f64>,
    pub index_hat: Vec<f64>,
    pub index_residual: f64,
    pub index_centrality: f64,
    pub expectation_residual: f64,
    pub jones_residual: f64,
    pub pp_cover_residual: f64,
    pub pp_expansion_residual: f64,
    pub pp_index_residual: f64,
    pub ok: bool,
    pub mismatches: Vec<String>,
}

/// Assignment of reconstructed blocks to blocks of M agreeing in size,
/// inclusion column and index value.
fn match_blocks(
    dims: &[usize],
    lambda: &[Vec<usize>],
    index: &[f64],
    s: &Structure,
    index_hat: &[f64],
) -> Option<Vec<usize>> {
    fn rec(k: usize, used: &mut Vec<bool>, out: &mut Vec<usize>, ok: &dyn Fn(usize, usize) -> bool) -> bool {
        if k == used.len() {
            return true;
        }
        for b in 0..used.len() {
            if !used[b] && ok(k, b) {
                used[b] = true;
                out.push(b);
                if rec(k + 1, used, out, ok) {
                    return true;
                }
                out.pop();
                used[b] = false;
            }
        }
        false
    }
    if s.block_dims.len() != dims.len() {
        return None;
    }
    let ok = |k: usize, b: usize| {
        s.block_dims[k] == dims[b]
            && lambda.iter().zip(&s.lambda).all(|(row, row_hat)| row[b] == row_hat[k])
            && (index_hat[k] - index[b]).abs() <= 1e-8 * index[b].max(1.0)
    };
    let mut out = Vec::new();
    rec(0, &mut vec![false; dims.len()], &mut out, &ok).then_some(out)
}

/// Builds the Q-system of `E`, reconstructs the extension and compares it
/// with the original inclusion.
pub fn roundtrip_report(e: &crate::expectation::ConditionalExpectation, seed: u64) -> Result<RoundtripReport> {
    let inc = e.inclusion();
    let pair = crate::bimodule::duality::build_duality(e)?;
    let (q, axioms) = qsystem_from_expectation(&pair)?;
    let rec = reconstruct_extension(&q)?;
    let s = rec.structure(seed)?;
    let ind_hat = rec.index()?;
    let index_centrality = rec.mhat.iter().map(|m| linalg::spectral_norm(&(m * &ind_hat - &ind_hat * m))).fold(0.0, f64::max);
    let trace = |m: &CMat| (0..m.nrows()).map(|i| m[(i, i)].re).sum::<f64>();
    let hat_values: Vec<f64> = s.projections.iter().map(|p| trace(&(&ind_hat * p)) / trace(p)).collect();
    let index = crate::index::index_of(e)?.blocks;
    let dims = inc.m().block_dims().to_vec();
    let lambda = inc.lambda().to_vec();
    let (pp_cover_residual, pp_expansion_residual, pp_index_residual) = rec.pp_witness_residuals(&ind_hat);
    let expectation_residual = rec.ehat_report(seed).max_residual();
    let jones_residual = rec.jones_residual();
    let mut mismatches = Vec::new();
    let (block_dims_hat, lambda_hat, index_hat, index_residual) = match match_blocks(&dims, &lambda, &index, &s, &hat_values) {
        Some(perm) => {
            let mut inv = vec![0; perm.len()];
            for (k, &b) in perm.iter().enumerate() {
                inv[b] = k;
            }
            let lam: Vec<Vec<usize>> = s.lambda.iter().map(|row| inv.iter().map(|&k| row[k]).collect()).collect();
            let vals: Vec<f64> = inv.iter().map(|&k| hat_values[k]).collect();
            let res = vals.iter().zip(&index).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            (inv.iter().map(|&k| s.block_dims[k]).collect(), lam, vals, res)
        }
        None => {
            mismatches.push(format!(
                "no block matching: dims {:?} vs {:?}, Λ {:?} vs {:?}, index {:?} vs {:?}",
                dims, s.block_dims, lambda, s.lambda, index, hat_values
            ));
            (s.block_dims.clone(), s.lambda.clone(), hat_values.clone(), f64::INFINITY)
        }
    };
    let checks = [
        ("index centrality", index_centrality),
        ("expectation axioms", expectation_residual),
        ("Jones projection", jones_residual),
        ("Pimsner–Popa cover", pp_cover_residual),
        ("Pimsner–Popa expansion", pp_expansion_residual),
        ("Pimsner–Popa index", pp_index_residual),
    ];
    for (name, v) in checks {
        if v > QSYSTEM_TOL {
            mismatches.push(format!("{name} residual {v:.3e}"));
        }
    }
    let ok = mismatches.is_empty();
    Ok(RoundtripReport {
        axioms,
        block_dims: dims,
        block_dims_hat,
        lambda,
        lambda_hat,
        index,
        index_hat,
        index_residual,
        index_centrality,
        expectation_residual,
        jones_residual,
        pp_cover_residual,
        pp_expansion_residual,
        pp_index_residual,
        ok,
        mismatches,
    })
}

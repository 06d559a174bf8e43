//! Unital inclusions `ι(N) ⊂ M` given by an inclusion matrix.

use std::sync::Arc;

use crate::algebra::{matrix_unit_basis, AlgebraElement, MultiMatrixAlgebra};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec, EPS_NUM};

#[derive(Debug, Clone)]
pub struct Inclusion {
    n: Arc<MultiMatrixAlgebra>,
    m: Arc<MultiMatrixAlgebra>,
    lambda: Vec<Vec<usize>>,
    /// Optional unitary twist per M-block: `ι(x)_j = U_j ι_can(x)_j U_j*`.
    twists: Option<Vec<CMat>>,
    /// `ι` as a `dim M × dim N` matrix on coordinates.
    embed: CMat,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomomorphismResiduals {
    pub unital: f64,
    pub multiplicative: f64,
    pub adjoint: f64,
    pub injective: bool,
}

impl HomomorphismResiduals {
    pub fn max(&self) -> f64 {
        self.unital.max(self.multiplicative).max(self.adjoint)
    }
}

pub fn build_inclusion(
    n: &Arc<MultiMatrixAlgebra>,
    m: &Arc<MultiMatrixAlgebra>,
    lambda: &[Vec<usize>],
) -> Result<Inclusion> {
    Inclusion::new(n, m, lambda, None)
}

impl Inclusion {
    pub fn new(
        n: &Arc<MultiMatrixAlgebra>,
        m: &Arc<MultiMatrixAlgebra>,
        lambda: &[Vec<usize>],
        twists: Option<Vec<CMat>>,
    ) -> Result<Self> {
        let a = n.num_blocks();
        let b = m.num_blocks();
        if lambda.len() != a || lambda.iter().any(|row| row.len() != b) {
            return Err(Error::InvalidInclusion(format!(
                "inclusion matrix must be {a}x{b} (N-blocks x M-blocks)"
            )));
        }
        #[allow(clippy::needless_range_loop)]
        for j in 0..b {
            let got: usize = (0..a).map(|i| lambda[i][j] * n.block_dims()[i]).sum();
            if (0..a).all(|i| lambda[i][j] == 0) {
                return Err(Error::ZeroColumn(j));
            }
            if got != m.block_dims()[j] {
                return Err(Error::Unitality { column: j, expected: m.block_dims()[j], got });
            }
        }
        if let Some(us) = &twists {
            if us.len() != b {
                return Err(Error::InvalidInclusion(format!("expected {b} twist unitaries, got {}", us.len())));
            }
            for (j, u) in us.iter().enumerate() {
                let mj = m.block_dims()[j];
                if u.shape() != (mj, mj) {
                    return Err(Error::InvalidInclusion(format!("twist {j} must be {mj}x{mj}")));
                }
                let res = linalg::spectral_norm(&(u.adjoint() * u - CMat::identity(mj, mj)));
                if res > 1e-8 {
                    return Err(Error::InvalidInclusion(format!("twist {j} is not unitary (residual {res:.3e})")));
                }
            }
        }
        let mut inc = Self {
            n: n.clone(),
            m: m.clone(),
            lambda: lambda.to_vec(),
            twists,
            embed: CMat::zeros(m.dim(), n.dim()),
        };
        let basis = matrix_unit_basis(n);
        for (col, u) in basis.iter().enumerate() {
            let image = inc.embed_uncached(u);
            inc.embed.set_column(col, &image.coords());
        }
        let res = inc.homomorphism_residuals();
        if res.max() > EPS_NUM || !res.injective {
            return Err(Error::InvalidInclusion(format!("embedding is not a unital injective *-homomorphism: {res:?}")));
        }
        Ok(inc)
    }

    fn embed_uncached(&self, x: &AlgebraElement) -> AlgebraElement {
        let blocks = (0..self.m.num_blocks())
            .map(|j| {
                let mj = self.m.block_dims()[j];
                let mut out = CMat::zeros(mj, mj);
                let mut offset = 0;
                for i in 0..self.n.num_blocks() {
                    let ni = self.n.block_dims()[i];
                    for _ in 0..self.lambda[i][j] {
                        out.view_mut((offset, offset), (ni, ni)).copy_from(x.block(i));
                        offset += ni;
                    }
                }
                match &self.twists {
                    Some(us) => &us[j] * out * us[j].adjoint(),
                    None => out,
                }
            })
            .collect();
        AlgebraElement::from_blocks(&self.m, blocks).expect("shapes follow block dims")
    }

    pub fn n(&self) -> &Arc<MultiMatrixAlgebra> {
        &self.n
    }

    pub fn m(&self) -> &Arc<MultiMatrixAlgebra> {
        &self.m
    }

    pub fn lambda(&self) -> &[Vec<usize>] {
        &self.lambda
    }

    pub fn twists(&self) -> Option<&[CMat]> {
        self.twists.as_deref()
    }

    pub fn embedding_matrix(&self) -> &CMat {
        &self.embed
    }

    pub fn homomorphism_residuals(&self) -> HomomorphismResiduals {
        let basis = matrix_unit_basis(&self.n);
        let one_n = AlgebraElement::identity(&self.n);
        let one_m = AlgebraElement::identity(&self.m);
        let unital = self.embed_raw(&one_n).sub(&one_m).norm();
        let images: Vec<AlgebraElement> = basis.iter().map(|u| self.embed_raw(u)).collect();
        let mut multiplicative: f64 = 0.0;
        let mut adjoint: f64 = 0.0;
        for (a, ua) in basis.iter().enumerate() {
            adjoint = adjoint.max(self.embed_raw(&ua.adjoint()).sub(&images[a].adjoint()).norm());
            for (b, ub) in basis.iter().enumerate() {
                let lhs = self.embed_raw(&ua.mul(ub));
                multiplicative = multiplicative.max(lhs.sub(&images[a].mul(&images[b])).norm());
            }
        }
        let vectors: Vec<CVec> = images.iter().map(|x| x.coords()).collect();
        let injective = linalg::span_rank(&vectors) == self.n.dim();
        HomomorphismResiduals { unital, multiplicative, adjoint, injective }
    }

    fn embed_raw(&self, x: &AlgebraElement) -> AlgebraElement {
        if self.embed.iter().all(|z| *z == c(0.0)) {
            self.embed_uncached(x)
        } else {
            AlgebraElement::from_coords(&self.m, &(&self.embed * x.coords()))
        }
    }

    /// `ι(n)`.
    pub fn apply(&self, x: &AlgebraElement) -> Result<AlgebraElement> {
        if x.algebra().block_dims() != self.n.block_dims() {
            return Err(Error::AlgebraMismatch { expected: self.n.to_string(), got: x.algebra().to_string() });
        }
        Ok(AlgebraElement::from_coords(&self.m, &(&self.embed * x.coords())))
    }

    /// `ι⁻¹(y)` for `y ∈ ι(N)`; fails when `y` is not in the range.
    pub fn pull_back(&self, y: &AlgebraElement) -> Result<AlgebraElement> {
        if y.algebra().block_dims() != self.m.block_dims() {
            return Err(Error::AlgebraMismatch { expected: self.m.to_string(), got: y.algebra().to_string() });
        }
        let b = CMat::from_column_slice(self.m.dim(), 1, y.coords().as_slice());
        let (x, res) = linalg::lstsq(&self.embed, &b);
        if res > 1e-8 * y.norm().max(1.0) {
            return Err(Error::Tolerance(format!("element is not in ι(N) (residual {res:.3e})")));
        }
        Ok(AlgebraElement::from_coords(&self.n, &x.column(0).into_owned()))
    }

    /// Orthonormal (for `Tr`) basis of `ι(N)′ ∩ M`.
    pub fn relative_commutant(&self) -> Vec<AlgebraElement> {
        let gens: Vec<AlgebraElement> = matrix_unit_basis(&self.n)
            .iter()
            .map(|u| self.apply(u).expect("basis of N"))
            .collect();
        commutant_in(&self.m, &gens)
    }

    /// Real-orthonormal basis of the Hermitian part of `ι(N)′ ∩ M`.
    pub fn hermitian_relative_commutant(&self) -> Vec<AlgebraElement> {
        hermitian_basis(&self.relative_commutant())
    }

    /// Orthonormal basis of `ι(N)` inside `M`.
    pub fn range_basis(&self) -> Vec<AlgebraElement> {
        let vectors: Vec<CVec> = (0..self.n.dim()).map(|k| self.embed.column(k).into_owned()).collect();
        linalg::orthonormal_span(&vectors)
            .iter()
            .map(|v| AlgebraElement::from_coords(&self.m, v))
            .collect()
    }

    /// Number of connected components of the bipartite Λ-graph.
    pub fn components(&self) -> usize {
        let a = self.n.num_blocks();
        let b = self.m.num_blocks();
        let mut parent: Vec<usize> = (0..a + b).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut y = x;
            while p[y] != r {
                let next = p[y];
                p[y] = r;
                y = next;
            }
            r
        }
        for i in 0..a {
            for j in 0..b {
                if self.lambda[i][j] > 0 {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, a + j));
                    parent[ri] = rj;
                }
            }
        }
        let mut roots: Vec<usize> = (0..a + b).map(|x| find(&mut parent, x)).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }

    /// `dim(Z(ι(N)) ∩ Z(M))` by a linear solve.
    pub fn center_intersection_dim(&self) -> usize {
        let mut cols: Vec<CVec> = Vec::new();
        for i in 0..self.n.num_blocks() {
            let mut s = vec![c(0.0); self.n.num_blocks()];
            s[i] = c(1.0);
            cols.push(self.apply(&AlgebraElement::block_scalars(&self.n, &s)).expect("N element").coords());
        }
        for j in 0..self.m.num_blocks() {
            let mut s = vec![c(0.0); self.m.num_blocks()];
            s[j] = c(-1.0);
            cols.push(AlgebraElement::block_scalars(&self.m, &s).coords());
        }
        linalg::nullspace(&linalg::columns(&cols)).len()
    }

    pub fn is_connected(&self) -> bool {
        self.components() == 1
    }

    /// Expected `dim(ι(N)′ ∩ M) = Σ Λᵢⱼ²`.
    pub fn relative_commutant_dim_formula(&self) -> usize {
        self.lambda.iter().flatten().map(|l| l * l).sum()
    }
}

pub fn apply_embedding(inc: &Inclusion, x: &AlgebraElement) -> Result<AlgebraElement> {
    inc.apply(x)
}

pub fn relative_commutant(inc: &Inclusion) -> Vec<AlgebraElement> {
    inc.relative_commutant()
}

pub fn is_connected(inc: &Inclusion) -> bool {
    inc.is_connected()
}

/// `{x ∈ A : x g = g x for all generators g}`, orthonormal in coordinates.
pub fn commutant_in(algebra: &Arc<MultiMatrixAlgebra>, gens: &[AlgebraElement]) -> Vec<AlgebraElement> {
    let d = algebra.dim();
    let basis = matrix_unit_basis(algebra);
    let mut system = CMat::zeros(d * gens.len().max(1), d);
    for (g_idx, g) in gens.iter().enumerate() {
        for (col, u) in basis.iter().enumerate() {
            let v = u.commutator(g).coords();
            system.view_mut((g_idx * d, col), (d, 1)).copy_from(&v);
        }
    }
    linalg::nullspace(&system)
        .iter()
        .map(|v| AlgebraElement::from_coords(algebra, v))
        .collect()
}

/// Real-orthonormal Hermitian basis of the real span of `{b, b*}` over a
/// *-closed complex subspace.
pub fn hermitian_basis(basis: &[AlgebraElement]) -> Vec<AlgebraElement> {
    let Some(first) = basis.first() else { return Vec::new() };
    let algebra = first.algebra().clone();
    let mut candidates = Vec::new();
    for b in basis {
        candidates.push(b.add(&b.adjoint()).scale(c(0.5)));
        candidates.push(b.sub(&b.adjoint()).scale(crate::linalg::C64::new(0.0, -0.5)));
    }
    // Real Gram–Schmidt: real coordinates of Hermitian elements.
    let mut out: Vec<(AlgebraElement, Vec<f64>)> = Vec::new();
    for h in candidates {
        let mut v = real_coords(&h);
        for _ in 0..2 {
            for (_, o) in &out {
                let p: f64 = v.iter().zip(o).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(o).for_each(|(a, b)| *a -= p * b);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            out.push((from_real_coords(&algebra, &v), v));
        }
    }
    out.into_iter().map(|(e, _)| e).collect()
}

fn real_coords(x: &AlgebraElement) -> Vec<f64> {
    x.coords().iter().flat_map(|z| [z.re, z.im]).collect()
}

fn from_real_coords(algebra: &Arc<MultiMatrixAlgebra>, v: &[f64]) -> AlgebraElement {
    let cv = CVec::from_fn(v.len() / 2, |k, _| crate::linalg::C64::new(v[2 * k], v[2 * k + 1]));
    AlgebraElement::from_coords(algebra, &cv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::make_algebra;
    use crate::fixtures;

    #[test]
    fn canonical_embeddings() {
        let f1 = fixtures::f1();
        let three = AlgebraElement::block_scalars(f1.n(), &[c(3.0)]);
        let img = f1.apply(&three).unwrap();
        assert!(img.sub(&AlgebraElement::identity(f1.m()).scale(c(3.0))).norm() < 1e-15);

        let f2 = fixtures::f2();
        let p = AlgebraElement::block_scalars(f2.n(), &[c(1.0), c(0.0)]);
        let img = f2.apply(&p).unwrap();
        assert!(img.sub(&AlgebraElement::matrix_unit(f2.m(), 0, 0, 0)).norm() < 1e-15);

        let f4 = fixtures::f4();
        let two = AlgebraElement::block_scalars(f4.n(), &[c(2.0)]);
        let img = f4.apply(&two).unwrap();
        assert!(img.sub(&AlgebraElement::identity(f4.m()).scale(c(2.0))).norm() < 1e-15);
        assert_eq!(f4.homomorphism_residuals().max(), 0.0);
    }

    #[test]
    fn unitality_and_zero_column_errors() {
        let n = make_algebra(&[1], "C").unwrap();
        let m = make_algebra(&[2, 3], "M2+M3").unwrap();
        match build_inclusion(&n, &m, &[vec![2, 2]]) {
            Err(Error::Unitality { column, .. }) => assert_eq!(column, 1),
            other => panic!("unexpected {other:?}"),
        }
        let n2 = make_algebra(&[1, 1], "C2").unwrap();
        let m2 = make_algebra(&[2, 1], "M2+C").unwrap();
        assert!(matches!(build_inclusion(&n2, &m2, &[vec![2, 0], vec![0, 0]]), Err(Error::ZeroColumn(1))));
    }

    #[test]
    fn relative_commutant_dimensions() {
        assert_eq!(fixtures::f1().relative_commutant().len(), 4);
        assert_eq!(fixtures::f2().relative_commutant().len(), 2);
        assert_eq!(fixtures::f5().relative_commutant().len(), 1);
        for inc in fixtures::all() {
            assert_eq!(inc.relative_commutant().len(), inc.relative_commutant_dim_formula());
            assert_eq!(inc.hermitian_relative_commutant().len(), inc.relative_commutant().len());
        }
    }

    #[test]
    fn connectedness() {
        assert!(fixtures::f4().is_connected());
        assert!(fixtures::f2().is_connected());
        let c2 = make_algebra(&[1, 1], "C2").unwrap();
        let diag = build_inclusion(&c2, &c2, &[vec![1, 0], vec![0, 1]]).unwrap();
        assert!(!diag.is_connected());
        assert_eq!(diag.center_intersection_dim(), 2);
        for inc in fixtures::all() {
            assert_eq!(inc.center_intersection_dim(), inc.components());
        }
    }

    #[test]
    fn twisted_embedding_is_validated() {
        let f2 = fixtures::f2();
        let s = 1.0 / 2f64.sqrt();
        let u = CMat::from_row_slice(2, 2, &[c(s), c(s), c(-s), c(s)]);
        let twisted = Inclusion::new(f2.n(), f2.m(), f2.lambda(), Some(vec![u])).unwrap();
        assert_eq!(twisted.relative_commutant().len(), 2);
        let bad = CMat::from_row_slice(2, 2, &[c(2.0), c(0.0), c(0.0), c(1.0)]);
        assert!(Inclusion::new(f2.n(), f2.m(), f2.lambda(), Some(vec![bad])).is_err());
    }

    #[test]
    fn pull_back_inverts_embedding() {
        let f2 = fixtures::f2();
        let x = AlgebraElement::block_scalars(f2.n(), &[c(2.0), c(-1.0)]);
        let y = f2.apply(&x).unwrap();
        assert!(f2.pull_back(&y).unwrap().sub(&x).norm() < 1e-12);
        assert!(f2.pull_back(&AlgebraElement::matrix_unit(f2.m(), 0, 0, 1)).is_err());
    }
}

//! Bimodules between multi-matrix algebras in canonical form and their
//! relative tensor product.
//!
//! An A–B bimodule is `⊕_{α,β} ℂ^{d_α} ⊗ C_{αβ} ⊗ ℂ^{d_β}` with basis
//! `|α, β, i, c, j⟩` (≅ `e^α_{i1} c e^β_{1j}`), ordered lexicographically.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bimodule {
    pub left_dims: Vec<usize>,
    pub right_dims: Vec<usize>,
    /// `mult[α][β] = dim C_{αβ}`.
    pub mult: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy)]
pub struct ActionReport {
    pub left_homomorphism: f64,
    pub right_homomorphism: f64,
    pub commute: f64,
}

impl ActionReport {
    pub fn max(&self) -> f64 {
        self.left_homomorphism.max(self.right_homomorphism).max(self.commute)
    }
}

impl Bimodule {
    pub fn new(left_dims: Vec<usize>, right_dims: Vec<usize>, mult: Vec<Vec<usize>>) -> Self {
        Self { left_dims, right_dims, mult }
    }

    /// `L²(A)` as an A–A bimodule.
    pub fn unit(dims: &[usize]) -> Self {
        let k = dims.len();
        let mult = (0..k).map(|a| (0..k).map(|b| usize::from(a == b)).collect()).collect();
        Self::new(dims.to_vec(), dims.to_vec(), mult)
    }

    pub fn full_dim(&self) -> usize {
        let mut total = 0;
        for (a, &da) in self.left_dims.iter().enumerate() {
            for (b, &db) in self.right_dims.iter().enumerate() {
                total += da * self.mult[a][b] * db;
            }
        }
        total
    }

    pub fn full_offset(&self, a: usize, b: usize) -> usize {
        let mut total = 0;
        for (aa, &da) in self.left_dims.iter().enumerate() {
            for (bb, &db) in self.right_dims.iter().enumerate() {
                if (aa, bb) == (a, b) {
                    return total;
                }
                total += da * self.mult[aa][bb] * db;
            }
        }
        total
    }

    pub fn full_index(&self, a: usize, b: usize, i: usize, c: usize, j: usize) -> usize {
        self.full_offset(a, b) + (i * self.mult[a][b] + c) * self.right_dims[b] + j
    }

    /// `λ(x)` for `x = (x_α)` given blockwise.
    pub fn left_action(&self, x: &[CMat]) -> CMat {
        let n = self.full_dim();
        let mut out = CMat::zeros(n, n);
        for (a, &da) in self.left_dims.iter().enumerate() {
            for (b, &db) in self.right_dims.iter().enumerate() {
                let m = self.mult[a][b];
                if m == 0 {
                    continue;
                }
                let block = linalg::kron(&x[a], &CMat::identity(m * db, m * db));
                let off = self.full_offset(a, b);
                let size = da * m * db;
                out.view_mut((off, off), (size, size)).copy_from(&block);
            }
        }
        out
    }

    /// `ρ(y)`: `|…, j⟩ ↦ Σ_l y_{jl} |…, l⟩`.
    pub fn right_action(&self, y: &[CMat]) -> CMat {
        let n = self.full_dim();
        let mut out = CMat::zeros(n, n);
        for (a, &da) in self.left_dims.iter().enumerate() {
            for (b, &db) in self.right_dims.iter().enumerate() {
                let m = self.mult[a][b];
                if m == 0 {
                    continue;
                }
                let block = linalg::kron(&CMat::identity(da * m, da * m), &y[b].transpose());
                let off = self.full_offset(a, b);
                let size = da * m * db;
                out.view_mut((off, off), (size, size)).copy_from(&block);
            }
        }
        out
    }

    fn unit_blocks(dims: &[usize], k: usize, i: usize, j: usize) -> Vec<CMat> {
        dims.iter()
            .enumerate()
            .map(|(b, &d)| {
                let mut m = CMat::zeros(d, d);
                if b == k {
                    m[(i, j)] = c(1.0);
                }
                m
            })
            .collect()
    }

    /// Matrix units of the left algebra acting on the left.
    pub fn left_units(&self) -> Vec<CMat> {
        units(&self.left_dims).map(|(k, i, j)| self.left_action(&Self::unit_blocks(&self.left_dims, k, i, j))).collect()
    }

    pub fn right_units(&self) -> Vec<CMat> {
        units(&self.right_dims).map(|(k, i, j)| self.right_action(&Self::unit_blocks(&self.right_dims, k, i, j))).collect()
    }

    /// Residuals of the *-representation and commutation properties.
    pub fn check_actions(&self) -> ActionReport {
        let rep = |dims: &[usize], act: &dyn Fn(&[CMat]) -> CMat| -> f64 {
            let mut worst: f64 = 0.0;
            let ones: Vec<CMat> = dims.iter().map(|&d| CMat::identity(d, d)).collect();
            let n = self.full_dim();
            worst = worst.max(linalg::spectral_norm(&(act(&ones) - CMat::identity(n, n))));
            for (k, i, j) in units(dims) {
                let u = act(&Self::unit_blocks(dims, k, i, j));
                let ustar = act(&Self::unit_blocks(dims, k, j, i));
                worst = worst.max(linalg::spectral_norm(&(u.adjoint() - &ustar)));
                for (k2, i2, j2) in units(dims) {
                    let v = act(&Self::unit_blocks(dims, k2, i2, j2));
                    let prod = if k == k2 && j == i2 {
                        act(&Self::unit_blocks(dims, k, i, j2))
                    } else {
                        CMat::zeros(n, n)
                    };
                    worst = worst.max(linalg::spectral_norm(&(&u * &v - prod)));
                }
            }
            worst
        };
        let left_homomorphism = rep(&self.left_dims, &|x| self.left_action(x));
        let right_homomorphism = rep(&self.right_dims, &|y| self.right_action(y).transpose());
        let mut commute: f64 = 0.0;
        for l in self.left_units() {
            for r in self.right_units() {
                commute = commute.max(linalg::spectral_norm(&(&l * &r - &r * &l)));
            }
        }
        ActionReport { left_homomorphism, right_homomorphism, commute }
    }
}

fn units(dims: &[usize]) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
    dims.iter()
        .enumerate()
        .flat_map(|(k, &d)| (0..d).flat_map(move |i| (0..d).map(move |j| (k, i, j))))
}

/// The relative tensor product `X ⊠_B Y` with its quotient map `q` from
/// `X ⊗ Y` (Kronecker order) and the Gram certification `q*q = G`.
#[derive(Debug, Clone)]
pub struct Fusion {
    pub bimodule: Bimodule,
    pub q: CMat,
    /// `‖q*q − G‖` (exact Gram) or the largest sampled deviation.
    pub gram_residual: f64,
    /// Numerical rank of `G` when computed exactly.
    pub gram_rank: Option<usize>,
}

const EXACT_GRAM_LIMIT: usize = 600;

/// Fuses over the shared algebra `B` with balanced inner product
/// `⟨x⊗y, x′⊗y′⟩ = ⟨y, λ(⟨x, x′⟩_B) y′⟩` for the trace `Tr` of `B`:
/// `G = Σ_u ρ_X(u*) ⊗ λ_Y(u)` over the matrix units `u` of `B`.
pub fn fuse(x: &Bimodule, y: &Bimodule) -> Result<Fusion> {
    if x.right_dims != y.left_dims {
        return Err(Error::AlgebraMismatch {
            expected: format!("{:?}", x.right_dims),
            got: format!("{:?}", y.left_dims),
        });
    }
    let mid = &x.right_dims;
    let mult: Vec<Vec<usize>> = (0..x.left_dims.len())
        .map(|a| {
            (0..y.right_dims.len())
                .map(|g| (0..mid.len()).map(|b| x.mult[a][b] * y.mult[b][g]).sum())
                .collect()
        })
        .collect();
    let fused = Bimodule::new(x.left_dims.clone(), y.right_dims.clone(), mult);
    let (nx, ny) = (x.full_dim(), y.full_dim());
    let mut q = CMat::zeros(fused.full_dim(), nx * ny);
    for (a, &da) in x.left_dims.iter().enumerate() {
        for (g, &dg) in y.right_dims.iter().enumerate() {
            let mut corner = 0;
            for (b, &db) in mid.iter().enumerate() {
                let (m1, m2) = (x.mult[a][b], y.mult[b][g]);
                for c1 in 0..m1 {
                    for c2 in 0..m2 {
                        let cc = corner + c1 * m2 + c2;
                        for i in 0..da {
                            for k in 0..dg {
                                let row = fused.full_index(a, g, i, cc, k);
                                for j in 0..db {
                                    let col = x.full_index(a, b, i, c1, j) * ny + y.full_index(b, g, j, c2, k);
                                    q[(row, col)] = c(1.0);
                                }
                            }
                        }
                    }
                }
                corner += m1 * m2;
            }
        }
    }
    let units_mid: Vec<(usize, usize, usize)> = units(mid).collect();
    let unit_blocks = |k, i, j| Bimodule::unit_blocks(mid, k, i, j);
    let (gram_residual, gram_rank) = if nx * ny <= EXACT_GRAM_LIMIT {
        let mut gram = CMat::zeros(nx * ny, nx * ny);
        for &(k, i, j) in &units_mid {
            let rx = x.right_action(&unit_blocks(k, j, i));
            let ly = y.left_action(&unit_blocks(k, i, j));
            gram += linalg::kron(&rx, &ly);
        }
        let min = linalg::min_eigenvalue(&gram);
        if min < -1e-9 {
            return Err(Error::Degenerate(format!("fusion Gram operator is not positive (min eigenvalue {min:.3e})")));
        }
        let (vals, _) = linalg::eigh(&gram);
        let top = vals.last().copied().unwrap_or(0.0).max(1e-300);
        let rank = vals.iter().filter(|&&v| v > linalg::RANK_CUTOFF * top).count();
        (linalg::spectral_norm(&(q.adjoint() * &q - gram)), Some(rank))
    } else {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(7);
        let mut worst: f64 = 0.0;
        for _ in 0..8 {
            let vx = linalg::random_vector(&mut rng, nx);
            let vy = linalg::random_vector(&mut rng, ny);
            let v = CVec::from_fn(nx * ny, |r, _| vx[r / ny] * vy[r % ny]);
            let lhs = linalg::vec_norm(&(&q * &v)).powi(2);
            let mut rhs = c(0.0);
            for &(k, i, j) in &units_mid {
                let rx = x.right_action(&unit_blocks(k, j, i));
                let ly = y.left_action(&unit_blocks(k, i, j));
                rhs += vx.dotc(&(rx * &vx)) * vy.dotc(&(ly * &vy));
            }
            worst = worst.max((lhs - rhs.re).abs() / lhs.max(1.0));
        }
        (worst, None)
    };
    Ok(Fusion { bimodule: fused, q, gram_residual, gram_rank })
}

/// The unitary `(X ⊠ Y) ⊠ Z → X ⊠ (Y ⊠ Z)` between the two canonical orderings
/// of the triple multiplicity spaces.
pub fn associator(x: &Bimodule, y: &Bimodule, z: &Bimodule) -> Result<CMat> {
    let left = fuse(&fuse(x, y)?.bimodule, z)?.bimodule;
    let right = fuse(x, &fuse(y, z)?.bimodule)?.bimodule;
    let n = left.full_dim();
    let mut perm = CMat::zeros(n, n);
    let (na, nb, nc, nd) = (x.left_dims.len(), x.right_dims.len(), y.right_dims.len(), z.right_dims.len());
    for a in 0..na {
        for d in 0..nd {
            // Left-associated order: (γ, β, c1, c2, c3); right-associated: (β, c1, γ, c2, c3).
            let mut left_labels = Vec::new();
            for g in 0..nc {
                for b in 0..nb {
                    for c1 in 0..x.mult[a][b] {
                        for c2 in 0..y.mult[b][g] {
                            for c3 in 0..z.mult[g][d] {
                                left_labels.push((b, c1, g, c2, c3));
                            }
                        }
                    }
                }
            }
            let mut right_labels = left_labels.clone();
            right_labels.sort();
            for (li, lab) in left_labels.iter().enumerate() {
                let ri = right_labels.binary_search(lab).expect("same label set");
                for i in 0..x.left_dims[a] {
                    for l in 0..z.right_dims[d] {
                        perm[(right.full_index(a, d, i, ri, l), left.full_index(a, d, i, li, l))] = c(1.0);
                    }
                }
            }
        }
    }
    Ok(perm)
}

/// A random vector in the full space, for tests and sampling.
pub fn random_full_vector<R: Rng + ?Sized>(b: &Bimodule, rng: &mut R) -> CVec {
    linalg::random_vector(rng, b.full_dim())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn iota_f1() -> Bimodule {
        Bimodule::new(vec![2], vec![1], vec![vec![2]])
    }

    fn iota_bar_f1() -> Bimodule {
        Bimodule::new(vec![1], vec![2], vec![vec![2]])
    }

    #[test]
    fn fusion_dimensions_and_gram() {
        let theta = fuse(&iota_bar_f1(), &iota_f1()).unwrap();
        assert_eq!(theta.bimodule.full_dim(), 4);
        assert!(theta.gram_residual < 1e-12);
        assert_eq!(theta.gram_rank, Some(4));
        let gamma = fuse(&iota_f1(), &iota_bar_f1()).unwrap();
        assert_eq!(gamma.bimodule.full_dim(), 16);
        assert!(gamma.gram_residual < 1e-12);
        assert!(gamma.bimodule.check_actions().max() < 1e-12);
    }

    #[test]
    fn right_unitor_is_right_action() {
        let x = Bimodule::new(vec![2, 1], vec![2, 3], vec![vec![1, 0], vec![2, 1]]);
        let unit = Bimodule::unit(&[2, 3]);
        let f = fuse(&x, &unit).unwrap();
        assert_eq!(f.bimodule, x);
        assert!(f.gram_residual < 1e-12);
        let f = fuse(&Bimodule::unit(&[2, 1]), &x).unwrap();
        assert_eq!(f.bimodule, x);
    }

    #[test]
    fn fusion_intertwines_actions() {
        let x = Bimodule::new(vec![2, 1], vec![1, 2], vec![vec![1, 1], vec![0, 1]]);
        let y = Bimodule::new(vec![1, 2], vec![3], vec![vec![1], vec![1]]);
        let f = fuse(&x, &y).unwrap();
        assert!(f.gram_residual < 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<CMat> = x.left_dims.iter().map(|&d| linalg::random_matrix(&mut rng, d, d)).collect();
        let b: Vec<CMat> = y.right_dims.iter().map(|&d| linalg::random_matrix(&mut rng, d, d)).collect();
        let lhs = &f.q * linalg::kron(&x.left_action(&a), &CMat::identity(y.full_dim(), y.full_dim()));
        let rhs = f.bimodule.left_action(&a) * &f.q;
        assert!(linalg::spectral_norm(&(lhs - rhs)) < 1e-10);
        let lhs = &f.q * linalg::kron(&CMat::identity(x.full_dim(), x.full_dim()), &y.right_action(&b));
        let rhs = f.bimodule.right_action(&b) * &f.q;
        assert!(linalg::spectral_norm(&(lhs - rhs)) < 1e-10);
    }

    #[test]
    fn associator_matches_quotients() {
        let x = Bimodule::new(vec![2, 3], vec![1], vec![vec![2], vec![3]]);
        let y = Bimodule::new(vec![1], vec![2, 3], vec![vec![2, 3]]);
        let z = x.clone();
        let xy = fuse(&x, &y).unwrap();
        let yz = fuse(&y, &z).unwrap();
        let xy_z = fuse(&xy.bimodule, &z).unwrap();
        let x_yz = fuse(&x, &yz.bimodule).unwrap();
        let a = associator(&x, &y, &z).unwrap();
        let nz = z.full_dim();
        let nx = x.full_dim();
        let left = &a * &xy_z.q * linalg::kron(&xy.q, &CMat::identity(nz, nz));
        let right = &x_yz.q * linalg::kron(&CMat::identity(nx, nx), &yz.q);
        assert!(linalg::spectral_norm(&(left - right)) < 1e-10);
        let n = a.nrows();
        assert!(linalg::spectral_norm(&(a.adjoint() * &a - CMat::identity(n, n))) < 1e-12);
    }
}

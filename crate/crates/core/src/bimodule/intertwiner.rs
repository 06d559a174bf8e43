//! 2-morphisms between words, stored in reduced form: an intertwiner of
//! canonical bimodules is `⊕_{α,γ} 1 ⊗ T_{αγ} ⊗ 1`, so only the multiplicity
//! blocks `T_{αγ}` are kept.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use rand::Rng;

use super::word::{Label, Object, Word, WordLayout};
use crate::error::{Error, Result};
use crate::inclusion::Inclusion;
use crate::linalg::{self, CMat, C64};

/// The strict 2-category generated by `ι` and `ῑ` for a fixed inclusion.
/// Word layouts are computed once and shared.
#[derive(Debug)]
pub struct Category {
    inc: Arc<Inclusion>,
    cache: RwLock<HashMap<Word, Arc<WordLayout>>>,
}

impl Category {
    pub fn new(inc: Arc<Inclusion>) -> Arc<Self> {
        Arc::new(Self { inc, cache: RwLock::new(HashMap::new()) })
    }

    pub fn inclusion(&self) -> &Arc<Inclusion> {
        &self.inc
    }

    pub fn layout(&self, word: &Word) -> Arc<WordLayout> {
        if let Some(l) = self.cache.read().expect("cache lock").get(word) {
            return l.clone();
        }
        let layout = Arc::new(WordLayout::new(&self.inc, word));
        self.cache.write().expect("cache lock").entry(word.clone()).or_insert(layout).clone()
    }

    pub fn num_blocks(&self, object: Object) -> usize {
        match object {
            Object::N => self.inc.n().num_blocks(),
            Object::M => self.inc.m().num_blocks(),
        }
    }
}

#[derive(Clone)]
pub struct Intertwiner {
    cat: Arc<Category>,
    source: Arc<WordLayout>,
    target: Arc<WordLayout>,
    blocks: Vec<Vec<CMat>>,
}

impl fmt::Debug for Intertwiner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Intertwiner")
            .field("source", &self.source.word.to_string())
            .field("target", &self.target.word.to_string())
            .field("blocks", &self.blocks)
            .finish()
    }
}

fn check_parallel(source: &Word, target: &Word) -> Result<()> {
    if source.target() != target.target() || source.source() != target.source() {
        return Err(Error::Type(format!(
            "no intertwiners from `{source}` ({}←{}) to `{target}` ({}←{})",
            source.target(),
            source.source(),
            target.target(),
            target.source()
        )));
    }
    Ok(())
}

impl Intertwiner {
    pub fn new(cat: &Arc<Category>, source: &Word, target: &Word, blocks: Vec<Vec<CMat>>) -> Result<Self> {
        check_parallel(source, target)?;
        let (src, tgt) = (cat.layout(source), cat.layout(target));
        let (na, ng) = (src.left_dims.len(), src.right_dims.len());
        if blocks.len() != na || blocks.iter().any(|row| row.len() != ng) {
            return Err(Error::Type(format!("block grid does not match `{source}` ⇒ `{target}`")));
        }
        for (a, row) in blocks.iter().enumerate() {
            for (g, block) in row.iter().enumerate() {
                let shape = (tgt.multiplicity(a, g), src.multiplicity(a, g));
                if block.shape() != shape {
                    return Err(Error::Type(format!(
                        "block ({a},{g}) of `{source}` ⇒ `{target}` has shape {:?}, expected {shape:?}",
                        block.shape()
                    )));
                }
            }
        }
        Ok(Self { cat: cat.clone(), source: src, target: tgt, blocks })
    }

    fn from_fn(cat: &Arc<Category>, source: &Word, target: &Word, mut f: impl FnMut(usize, usize, usize, usize) -> CMat) -> Result<Self> {
        check_parallel(source, target)?;
        let (src, tgt) = (cat.layout(source), cat.layout(target));
        let blocks = (0..src.left_dims.len())
            .map(|a| (0..src.right_dims.len()).map(|g| f(a, g, tgt.multiplicity(a, g), src.multiplicity(a, g))).collect())
            .collect();
        Ok(Self { cat: cat.clone(), source: src, target: tgt, blocks })
    }

    pub fn zero(cat: &Arc<Category>, source: &Word, target: &Word) -> Result<Self> {
        Self::from_fn(cat, source, target, |_, _, r, c| CMat::zeros(r, c))
    }

    pub fn identity(cat: &Arc<Category>, word: &Word) -> Self {
        Self::from_fn(cat, word, word, |_, _, r, c| CMat::identity(r, c)).expect("a word is parallel to itself")
    }

    pub fn random<R: Rng + ?Sized>(cat: &Arc<Category>, source: &Word, target: &Word, rng: &mut R) -> Result<Self> {
        Self::from_fn(cat, source, target, |_, _, r, c| linalg::random_matrix(rng, r, c))
    }

    /// The element of `End(1_X) ≅ Z(X)` with the given block values.
    pub fn central(cat: &Arc<Category>, object: Object, values: &[C64]) -> Result<Self> {
        let k = cat.num_blocks(object);
        if values.len() != k {
            return Err(Error::Type(format!("central element of {object} needs {k} values, got {}", values.len())));
        }
        let unit = Word::unit(object);
        Self::from_fn(cat, &unit, &unit, |a, g, r, cc| {
            let mut m = CMat::zeros(r, cc);
            if a == g {
                m[(0, 0)] = values[a];
            }
            m
        })
    }

    pub fn category(&self) -> &Arc<Category> {
        &self.cat
    }

    pub fn source(&self) -> &Word {
        &self.source.word
    }

    pub fn target(&self) -> &Word {
        &self.target.word
    }

    pub fn blocks(&self) -> &[Vec<CMat>] {
        &self.blocks
    }

    pub fn block(&self, a: usize, g: usize) -> &CMat {
        &self.blocks[a][g]
    }

    fn zip(&self, other: &Self, f: impl Fn(&CMat, &CMat) -> CMat) -> Result<Self> {
        if self.source.word != other.source.word || self.target.word != other.target.word {
            return Err(Error::Type(format!(
                "cannot combine `{}` ⇒ `{}` with `{}` ⇒ `{}`",
                self.source.word, self.target.word, other.source.word, other.target.word
            )));
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(r1, r2)| r1.iter().zip(r2).map(|(a, b)| f(a, b)).collect())
            .collect();
        Ok(Self { blocks, ..self.clone() })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, s: C64) -> Self {
        let blocks = self.blocks.iter().map(|row| row.iter().map(|b| b * s).collect()).collect();
        Self { blocks, ..self.clone() }
    }

    pub fn adjoint(&self) -> Self {
        let blocks = self.blocks.iter().map(|row| row.iter().map(|b| b.adjoint()).collect()).collect();
        Self { cat: self.cat.clone(), source: self.target.clone(), target: self.source.clone(), blocks }
    }

    /// Operator norm of the full intertwiner.
    pub fn norm(&self) -> f64 {
        self.blocks.iter().flatten().map(linalg::spectral_norm).fold(0.0, f64::max)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if other.target.word != self.source.word {
            return Err(Error::Type(format!(
                "cannot compose: `{}` ⇒ `{}` followed by `{}` ⇒ `{}`",
                other.source.word, other.target.word, self.source.word, self.target.word
            )));
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(r1, r2)| r1.iter().zip(r2).map(|(a, b)| a * b).collect())
            .collect();
        Ok(Self { cat: self.cat.clone(), source: other.source.clone(), target: self.target.clone(), blocks })
    }

    /// Horizontal composition `self ⊗ other`, with `self` the outer factor.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        if self.source.word.source() != other.source.word.target() {
            return Err(Error::Type(format!(
                "cannot place `{}` ⇒ `{}` beside `{}` ⇒ `{}`: objects {} and {} differ",
                self.source.word,
                self.target.word,
                other.source.word,
                other.target.word,
                self.source.word.source(),
                other.source.word.target()
            )));
        }
        let cat = &self.cat;
        let src = cat.layout(&self.source.word.concat(&other.source.word)?);
        let tgt = cat.layout(&self.target.word.concat(&other.target.word)?);
        let (ks, kt) = (self.source.word.letters().len(), self.target.word.letters().len());
        let blocks = (0..src.left_dims.len())
            .map(|a| {
                (0..src.right_dims.len())
                    .map(|g| {
                        let rows: Vec<_> = tgt.labels(a, g).iter().map(|l| split(l, kt, a, g)).collect();
                        let cols: Vec<_> = src.labels(a, g).iter().map(|l| split(l, ks, a, g)).collect();
                        let mut out = CMat::zeros(rows.len(), cols.len());
                        for (p, (l1, b, l2)) in rows.iter().enumerate() {
                            let y1 = self.target.position(a, *b, l1).expect("target label of outer factor");
                            let y2 = other.target.position(*b, g, l2).expect("target label of inner factor");
                            for (q, (m1, b2, m2)) in cols.iter().enumerate() {
                                if b != b2 {
                                    continue;
                                }
                                let x1 = self.source.position(a, *b, m1).expect("source label of outer factor");
                                let x2 = other.source.position(*b, g, m2).expect("source label of inner factor");
                                out[(p, q)] = self.blocks[a][*b][(y1, x1)] * other.blocks[*b][g][(y2, x2)];
                            }
                        }
                        out
                    })
                    .collect()
            })
            .collect();
        Ok(Self { cat: cat.clone(), source: src, target: tgt, blocks })
    }

    /// Block values of an element of `End(1_X)` or of any map between unit words.
    pub fn central_values(&self) -> Result<Vec<C64>> {
        if !self.source.word.is_unit() || !self.target.word.is_unit() {
            return Err(Error::Type(format!(
                "`{}` ⇒ `{}` is not a closed diagram",
                self.source.word, self.target.word
            )));
        }
        Ok((0..self.blocks.len()).map(|a| self.blocks[a][a][(0, 0)]).collect())
    }

    /// The matrix between the realized spaces.
    pub fn to_full(&self) -> CMat {
        let (s, t) = (self.source.shape(), self.target.shape());
        let mut out = CMat::zeros(t.full_dim(), s.full_dim());
        for (a, &da) in s.left_dims.iter().enumerate() {
            for (g, &dg) in s.right_dims.iter().enumerate() {
                let b = &self.blocks[a][g];
                for i in 0..da {
                    for j in 0..dg {
                        for p in 0..b.nrows() {
                            for q in 0..b.ncols() {
                                out[(t.full_index(a, g, i, p, j), s.full_index(a, g, i, q, j))] = b[(p, q)];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Reads the reduced blocks of a bimodule map off its `i = j = 0`
    /// components; also returns `‖to_full − mat‖`.
    pub fn from_full(cat: &Arc<Category>, source: &Word, target: &Word, mat: &CMat) -> Result<(Self, f64)> {
        let (src, tgt) = (cat.layout(source), cat.layout(target));
        if mat.shape() != (tgt.full_dim(), src.full_dim()) {
            return Err(Error::Type(format!("matrix shape {:?} does not match `{source}` ⇒ `{target}`", mat.shape())));
        }
        let out = Self::from_fn(cat, source, target, |a, g, r, cc| {
            CMat::from_fn(r, cc, |p, q| mat[(tgt.shape().full_index(a, g, 0, p, 0), src.shape().full_index(a, g, 0, q, 0))])
        })?;
        let residual = linalg::spectral_norm(&(out.to_full() - mat));
        Ok((out, residual))
    }

    /// Largest commutator of the full matrix with the boundary actions.
    pub fn action_residual(&self) -> f64 {
        let (s, t) = (self.source.shape(), self.target.shape());
        let full = self.to_full();
        let mut worst: f64 = 0.0;
        for (ls, lt) in s.left_units().iter().zip(t.left_units()) {
            worst = worst.max(linalg::spectral_norm(&(&full * ls - lt * &full)));
        }
        for (rs, rt) in s.right_units().iter().zip(t.right_units()) {
            worst = worst.max(linalg::spectral_norm(&(&full * rs - rt * &full)));
        }
        worst
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.norm())
    }
}

/// Splits a label of a concatenated word after its first `k` letters into
/// the outer label, the shared block and the inner label.
fn split(label: &Label, k: usize, a: usize, g: usize) -> (Label, usize, Label) {
    let total = label.corners.len();
    let empty = Label { path: Vec::new(), corners: Vec::new() };
    if k == 0 {
        return (empty, a, label.clone());
    }
    if k == total {
        return (label.clone(), g, empty);
    }
    (
        Label { path: label.path[..k - 1].to_vec(), corners: label.corners[..k].to_vec() },
        label.path[k - 1],
        Label { path: label.path[k..].to_vec(), corners: label.corners[k..].to_vec() },
    )
}

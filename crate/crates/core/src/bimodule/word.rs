//! 1-morphisms as words in `ι: N → M` and `ῑ: M → N`, and the multiplicity
//! layout of their left-associated realizations.

use std::collections::HashMap;
use std::fmt;

use super::fusion::Bimodule;
use crate::error::{Error, Result};
use crate::inclusion::Inclusion;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Object {
    N,
    M,
}

impl fmt::Display for Object {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Object::N => "N",
            Object::M => "M",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Letter {
    /// `ι: N → M`, realized by the M–N bimodule `L²M`.
    Iota,
    /// `ῑ: M → N`, realized by the conjugate N–M bimodule.
    IotaBar,
}

impl Letter {
    /// Object acting on the left of the bimodule.
    pub fn target(self) -> Object {
        match self {
            Letter::Iota => Object::M,
            Letter::IotaBar => Object::N,
        }
    }

    /// Object acting on the right of the bimodule.
    pub fn source(self) -> Object {
        match self {
            Letter::Iota => Object::N,
            Letter::IotaBar => Object::M,
        }
    }

    /// Multiplicity of the simple `(left, right)` block pair.
    pub fn multiplicity(self, inc: &Inclusion, left: usize, right: usize) -> usize {
        match self {
            Letter::Iota => inc.lambda()[right][left],
            Letter::IotaBar => inc.lambda()[left][right],
        }
    }
}

/// `l₁ l₂ … l_k = l₁ ∘ … ∘ l_k`; the empty word is the unit at `object`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Word {
    letters: Vec<Letter>,
    object: Object,
}

impl Word {
    pub fn unit(object: Object) -> Self {
        Self { letters: Vec::new(), object }
    }

    pub fn new(letters: Vec<Letter>) -> Result<Self> {
        let Some(first) = letters.first() else {
            return Err(Error::Type("a non-unit word needs at least one letter".into()));
        };
        for w in letters.windows(2) {
            if w[0].source() != w[1].target() {
                return Err(Error::Type(format!("letters `{}` and `{}` do not compose", letter_name(w[0]), letter_name(w[1]))));
            }
        }
        let object = first.target();
        Ok(Self { letters, object })
    }

    pub fn letter(l: Letter) -> Self {
        Self { letters: vec![l], object: l.target() }
    }

    pub fn iota() -> Self {
        Self::letter(Letter::Iota)
    }

    pub fn iota_bar() -> Self {
        Self::letter(Letter::IotaBar)
    }

    /// Parses `i`, `ibar`, concatenations such as `ibari`, and `1N`/`1M`.
    pub fn parse(text: &str) -> Result<Self> {
        let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        match t.as_str() {
            "1N" => return Ok(Self::unit(Object::N)),
            "1M" => return Ok(Self::unit(Object::M)),
            "" => return Err(Error::Type("empty word".into())),
            _ => {}
        }
        let mut letters = Vec::new();
        let mut rest = t.as_str();
        while !rest.is_empty() {
            if let Some(r) = rest.strip_prefix("ibar") {
                letters.push(Letter::IotaBar);
                rest = r;
            } else if let Some(r) = rest.strip_prefix('i') {
                letters.push(Letter::Iota);
                rest = r;
            } else {
                return Err(Error::Type(format!("`{text}` is not a word in i, ibar")));
            }
        }
        Self::new(letters)
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn is_unit(&self) -> bool {
        self.letters.is_empty()
    }

    /// Object on the left.
    pub fn target(&self) -> Object {
        self.letters.first().map(|l| l.target()).unwrap_or(self.object)
    }

    /// Object on the right.
    pub fn source(&self) -> Object {
        self.letters.last().map(|l| l.source()).unwrap_or(self.object)
    }

    pub fn concat(&self, other: &Word) -> Result<Word> {
        if self.source() != other.target() {
            return Err(Error::Type(format!("cannot compose words `{self}` and `{other}`")));
        }
        if self.is_unit() {
            return Ok(other.clone());
        }
        if other.is_unit() {
            return Ok(self.clone());
        }
        let mut letters = self.letters.clone();
        letters.extend_from_slice(&other.letters);
        Word::new(letters)
    }

    /// The conjugate word (reversed, with `ι ↔ ῑ`).
    pub fn conjugate(&self) -> Word {
        if self.is_unit() {
            return self.clone();
        }
        let letters = self
            .letters
            .iter()
            .rev()
            .map(|l| match l {
                Letter::Iota => Letter::IotaBar,
                Letter::IotaBar => Letter::Iota,
            })
            .collect();
        Word::new(letters).expect("conjugate of a valid word")
    }
}

fn letter_name(l: Letter) -> &'static str {
    match l {
        Letter::Iota => "i",
        Letter::IotaBar => "ibar",
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_unit() {
            return write!(f, "1{}", self.object);
        }
        let names: Vec<&str> = self.letters.iter().map(|&l| letter_name(l)).collect();
        f.write_str(&names.join(" "))
    }
}

pub fn block_dims(inc: &Inclusion, object: Object) -> &[usize] {
    match object {
        Object::N => inc.n().block_dims(),
        Object::M => inc.m().block_dims(),
    }
}

/// Basis label of a multiplicity space: intermediate blocks and one corner
/// index per letter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label {
    pub path: Vec<usize>,
    pub corners: Vec<usize>,
}

/// Multiplicity spaces `C_{αγ}` of a word, in left-associated fusion order:
/// lexicographic in `(β_{k−1}, …, β₁, c₁, …, c_k)`.
#[derive(Debug, Clone)]
pub struct WordLayout {
    pub word: Word,
    pub left_dims: Vec<usize>,
    pub right_dims: Vec<usize>,
    labels: Vec<Vec<Vec<Label>>>,
    positions: Vec<Vec<HashMap<Label, usize>>>,
    shape: Bimodule,
}

impl WordLayout {
    pub fn new(inc: &Inclusion, word: &Word) -> Self {
        let left_dims = block_dims(inc, word.target()).to_vec();
        let right_dims = block_dims(inc, word.source()).to_vec();
        let mut labels = vec![vec![Vec::new(); right_dims.len()]; left_dims.len()];
        if word.is_unit() {
            for (a, row) in labels.iter_mut().enumerate() {
                row[a].push(Label { path: Vec::new(), corners: Vec::new() });
            }
        } else {
            let letters = word.letters();
            for (a, row) in labels.iter_mut().enumerate() {
                for (g, cell) in row.iter_mut().enumerate() {
                    enumerate_labels(inc, letters, a, g, cell);
                    cell.sort_by(|x, y| {
                        let kx: Vec<usize> = x.path.iter().rev().chain(&x.corners).copied().collect();
                        let ky: Vec<usize> = y.path.iter().rev().chain(&y.corners).copied().collect();
                        kx.cmp(&ky)
                    });
                }
            }
        }
        let positions = labels
            .iter()
            .map(|row| {
                row.iter()
                    .map(|cell| cell.iter().enumerate().map(|(k, l)| (l.clone(), k)).collect())
                    .collect()
            })
            .collect();
        let mult = labels.iter().map(|row| row.iter().map(|cell| cell.len()).collect()).collect();
        let shape = Bimodule::new(left_dims.clone(), right_dims.clone(), mult);
        Self { word: word.clone(), left_dims, right_dims, labels, positions, shape }
    }

    pub fn multiplicity(&self, a: usize, g: usize) -> usize {
        self.labels[a][g].len()
    }

    pub fn labels(&self, a: usize, g: usize) -> &[Label] {
        &self.labels[a][g]
    }

    pub fn position(&self, a: usize, g: usize, label: &Label) -> Option<usize> {
        self.positions[a][g].get(label).copied()
    }

    /// Full realization with these multiplicities.
    pub fn shape(&self) -> &Bimodule {
        &self.shape
    }

    pub fn full_dim(&self) -> usize {
        self.shape.full_dim()
    }
}

fn enumerate_labels(inc: &Inclusion, letters: &[Letter], a: usize, g: usize, out: &mut Vec<Label>) {
    fn rec(inc: &Inclusion, letters: &[Letter], ends: (usize, usize), path: &mut Vec<usize>, out: &mut Vec<Label>) {
        let pos = path.len();
        if pos + 1 == letters.len() {
            let mut blocks = vec![ends.0];
            blocks.extend_from_slice(path);
            blocks.push(ends.1);
            let mults: Vec<usize> = (0..letters.len())
                .map(|t| letters[t].multiplicity(inc, blocks[t], blocks[t + 1]))
                .collect();
            if mults.contains(&0) {
                return;
            }
            let mut corners = vec![0; letters.len()];
            loop {
                out.push(Label { path: path.clone(), corners: corners.clone() });
                let mut t = letters.len();
                loop {
                    if t == 0 {
                        return;
                    }
                    t -= 1;
                    corners[t] += 1;
                    if corners[t] < mults[t] {
                        break;
                    }
                    corners[t] = 0;
                }
            }
        }
        for b in 0..block_dims(inc, letters[pos].source()).len() {
            path.push(b);
            rec(inc, letters, ends, path, out);
            path.pop();
        }
    }
    rec(inc, letters, (a, g), &mut Vec::new(), out);
}

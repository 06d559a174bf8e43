//! Loading inclusions, expectations and diagrams from JSON manifests.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algebra::{make_algebra, AlgebraElement, TraceVector};
use crate::bimodule::diagram::{parse_diagram, Diagram};
use crate::bimodule::eval::Bindings;
use crate::bimodule::intertwiner::{Category, Intertwiner};
use crate::bimodule::word::{Object, Word};
use crate::error::{Error, Result};
use crate::expectation::{from_density, normalize_density, trace_expectation, ConditionalExpectation};
use crate::inclusion::Inclusion;
use crate::linalg::{CMat, EPS_NUM, RANK_CUTOFF};
use crate::qsystem::QSystemData;
use crate::serial::{self, Matrix, Scalar};

/// Residual allowed when reading an explicit intertwiner box.
const BOX_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraSpec {
    pub blocks: Vec<usize>,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EmbeddingSpec {
    /// `"canonical"`.
    Named(String),
    /// One unitary per M-block, conjugating the canonical embedding.
    Twisted { unitaries: Vec<Matrix> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ExpectationSpec {
    /// The `Tr_s`-preserving expectation.
    Trace {
        #[serde(default)]
        s: Option<Vec<f64>>,
    },
    /// `E_τ(h^{1/2} · h^{1/2})` for `h ∈ ι(N)′∩M`, given blockwise.
    Density {
        #[serde(default)]
        s: Option<Vec<f64>>,
        h: Vec<Matrix>,
        /// Rescale `h` so that `E_τ(h) = 1`.
        #[serde(default)]
        normalize: bool,
    },
    /// The coordinate matrix in the matrix-unit basis of M.
    Explicit {
        #[serde(default)]
        s: Option<Vec<f64>>,
        matrix: Matrix,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum BoxSpec {
    Central {
        central: Vec<Scalar>,
        #[serde(default)]
        object: Option<String>,
    },
    Map {
        source: String,
        target: String,
        matrix: Matrix,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    #[serde(rename = "N")]
    pub n: AlgebraSpec,
    #[serde(rename = "M")]
    pub m: AlgebraSpec,
    pub lambda: Vec<Vec<usize>>,
    #[serde(default)]
    pub embedding: Option<EmbeddingSpec>,
    pub expectation: ExpectationSpec,
    #[serde(default)]
    pub diagram: Option<String>,
    #[serde(default)]
    pub boxes: BTreeMap<String, BoxSpec>,
    #[serde(default)]
    pub qsystem: Option<QSystemData>,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub file: ManifestFile,
    pub inclusion: Arc<Inclusion>,
    pub expectation: ConditionalExpectation,
    pub diagram: Option<Diagram>,
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    parse_manifest(&text).map_err(|e| match e {
        Error::Manifest(msg) => Error::Manifest(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let file: ManifestFile = serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
    build(file)
}

fn trace_vector(s: &Option<Vec<f64>>, inc: &Inclusion) -> Result<TraceVector> {
    match s {
        None => Ok(TraceVector::uniform(inc.m())),
        Some(w) if w.len() != inc.m().num_blocks() => Err(Error::Manifest(format!(
            "trace vector has {} weights, M has {} blocks",
            w.len(),
            inc.m().num_blocks()
        ))),
        Some(w) => TraceVector::new(w),
    }
}

pub fn build(file: ManifestFile) -> Result<Manifest> {
    let n = make_algebra(&file.n.blocks, file.n.label.as_deref().unwrap_or("N"))?;
    let m = make_algebra(&file.m.blocks, file.m.label.as_deref().unwrap_or("M"))?;
    let twists = match &file.embedding {
        None => None,
        Some(EmbeddingSpec::Named(name)) if name == "canonical" => None,
        Some(EmbeddingSpec::Named(name)) => return Err(Error::Manifest(format!("unknown embedding `{name}`"))),
        Some(EmbeddingSpec::Twisted { unitaries }) => Some(
            unitaries
                .iter()
                .enumerate()
                .map(|(j, u)| serial::from_matrix(u, &format!("embedding unitary {j}")))
                .collect::<Result<Vec<CMat>>>()?,
        ),
    };
    let inclusion = Arc::new(Inclusion::new(&n, &m, &file.lambda, twists)?);
    let expectation = match &file.expectation {
        ExpectationSpec::Trace { s } => trace_expectation(&inclusion, &trace_vector(s, &inclusion)?)?,
        ExpectationSpec::Density { s, h, normalize } => {
            let s = trace_vector(s, &inclusion)?;
            let dims = inclusion.m().block_dims();
            if h.len() != dims.len() {
                return Err(Error::Manifest(format!("density has {} blocks, M has {}", h.len(), dims.len())));
            }
            let blocks = h
                .iter()
                .zip(dims)
                .enumerate()
                .map(|(k, (b, &d))| serial::square(b, d, &format!("density block {k}")))
                .collect::<Result<Vec<_>>>()?;
            let mut h = AlgebraElement::from_blocks(inclusion.m(), blocks)?;
            if *normalize {
                let cert = h.is_positive(EPS_NUM).map_err(|e| Error::InvalidDensity(e.to_string()))?;
                if cert.min_eigenvalue <= RANK_CUTOFF {
                    return Err(Error::InvalidDensity(format!(
                        "h is not positive invertible (min eigenvalue {:.3e})",
                        cert.min_eigenvalue
                    )));
                }
                h = normalize_density(&inclusion, &s, &h)?;
            }
            from_density(&inclusion, &s, &h)?
        }
        ExpectationSpec::Explicit { s, matrix } => {
            let map = serial::square(matrix, inclusion.m().dim(), "expectation matrix")?;
            ConditionalExpectation::from_matrix(&inclusion, &trace_vector(s, &inclusion)?, map)?
        }
    };
    let diagram = file.diagram.as_deref().map(parse_diagram).transpose()?;
    Ok(Manifest { file, inclusion, expectation, diagram })
}

fn object(name: &str) -> Result<Object> {
    match name {
        "N" => Ok(Object::N),
        "M" => Ok(Object::M),
        other => Err(Error::Manifest(format!("unknown object `{other}` (expected N or M)"))),
    }
}

impl Manifest {
    /// The box bindings, with explicit maps read over `cat`.
    pub fn bindings(&self, cat: &Arc<Category>) -> Result<Bindings> {
        let mut out = Bindings::new();
        for (name, spec) in &self.file.boxes {
            match spec {
                BoxSpec::Central { central, object: obj } => {
                    out.central(name.clone(), serial::scalars(central), obj.as_deref().map(object).transpose()?);
                }
                BoxSpec::Map { source, target, matrix } => {
                    let (s, t) = (Word::parse(source)?, Word::parse(target)?);
                    let mat = serial::from_matrix(matrix, &format!("box {name}"))?;
                    let (map, res) = Intertwiner::from_full(cat, &s, &t, &mat)?;
                    if res > BOX_TOL {
                        return Err(Error::Tolerance(format!("box {name} is not a bimodule map (residual {res:.3e})")));
                    }
                    out.intertwiner(name.clone(), map);
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::index_of;

    const F4: &str = r#"{
        "N": {"blocks": [1], "label": "C"},
        "M": {"blocks": [2, 3], "label": "M2+M3"},
        "lambda": [[2, 3]],
        "expectation": {"type": "trace"}
    }"#;

    #[test]
    fn loads_f4() {
        let m = parse_manifest(F4).unwrap();
        assert_eq!(m.inclusion.lambda(), &[vec![2, 3]]);
        let ind = index_of(&m.expectation).unwrap();
        assert!((ind.norm() - 15.0).abs() < 1e-9);
    }

    #[test]
    fn unitality_failure_names_the_column() {
        let text = F4.replace("[[2, 3]]", "[[2, 2]]");
        match parse_manifest(&text) {
            Err(Error::Unitality { column: 1, expected: 3, got: 2 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn densities() {
        let f3 = |h: &str, extra: &str| {
            format!(
                r#"{{"N": {{"blocks": [1]}}, "M": {{"blocks": [1, 1]}}, "lambda": [[1, 1]],
                    "expectation": {{"type": "density", "h": {h}{extra}}}}}"#
            )
        };
        let e = parse_manifest(&f3("[[[0.6]], [[1.4]]]", "")).unwrap().expectation;
        assert!((index_of(&e).unwrap().blocks[0] - 1.0 / 0.3).abs() < 1e-9);
        assert!(matches!(parse_manifest(&f3("[[[2.5]], [[-0.5]]]", "")), Err(Error::InvalidDensity(_))));
        assert!(matches!(
            parse_manifest(&f3("[[[3]], [[-1]]]", ", \"normalize\": true")),
            Err(Error::InvalidDensity(_))
        ));
        let e = parse_manifest(&f3("[[[3]], [[7]]]", ", \"normalize\": true")).unwrap().expectation;
        assert!((index_of(&e).unwrap().blocks[1] - 1.0 / 0.7).abs() < 1e-9);
    }

    #[test]
    fn schema_errors_are_positioned() {
        let text = F4.replace("\"lambda\"", "\"lambda_\"");
        let Err(Error::Manifest(msg)) = parse_manifest(&text) else { panic!() };
        assert!(msg.contains("line 4"), "{msg}");
        let Err(Error::Manifest(msg)) = parse_manifest("{\"N\": [1,") else { panic!() };
        assert!(msg.contains("column"), "{msg}");
        let text = F4.replace("\"trace\"", "\"fancy\"");
        assert!(matches!(parse_manifest(&text), Err(Error::Manifest(_))));
    }

    #[test]
    fn embeddings_diagrams_and_boxes() {
        let text = r#"{
            "N": {"blocks": [1]}, "M": {"blocks": [2]}, "lambda": [[2]],
            "embedding": {"unitaries": [[[0, 1], [1, 0]]]},
            "expectation": {"type": "trace"},
            "diagram": "rbar ; (id(i) | z | id(ibar)) ; rbar*",
            "boxes": {"z": {"central": [[2, 0]], "object": "M"},
                      "t": {"source": "i", "target": "i", "matrix": [[3, 0, 0, 0], [0, 3, 0, 0], [0, 0, 3, 0], [0, 0, 0, 3]]}}
        }"#;
        let m = parse_manifest(text).unwrap();
        assert!(m.diagram.is_some());
        let cat = Category::new(m.inclusion.clone());
        let b = m.bindings(&cat).unwrap();
        assert!(b.get("z").is_ok() && b.get("t").is_ok());
        let bad = text.replace("[[3, 0, 0, 0]", "[[3, 0, 1, 0]");
        assert!(matches!(parse_manifest(&bad).unwrap().bindings(&cat), Err(Error::Tolerance(_))));
        let bad = text.replace("rbar*\"", "rbar* |\"");
        assert!(matches!(parse_manifest(&bad), Err(Error::Syntax { .. })));
        let bad = text.replace("[[0, 1], [1, 0]]", "[[0, 2], [1, 0]]");
        assert!(matches!(parse_manifest(&bad), Err(Error::InvalidInclusion(_))));
    }
}

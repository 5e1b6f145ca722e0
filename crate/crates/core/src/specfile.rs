//! JSON function-spec format.
//!
//! ```json
//! {"kind": "sum", "parts": [
//!   {"kind": "quadratic", "A": [[2, 0], [0, 0]], "b": [1, 1], "c": 0},
//!   {"kind": "scalar_composite", "terms": [
//!     {"w": 1, "kernel": "relu_square", "a": [1, 0], "s": 0}]}
//! ]}
//! ```
//!
//! Kinds: `quadratic` (`A`, `b`, `c`), `max_affine` (`pieces`: `a`, `c`),
//! `scalar_composite` (`terms`: `w`, `kernel`, `a`, `s`), `affine_plus`
//! (`base`, `l`, `c0`), `sum` (`parts`). Dimensions are inferred and must agree.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcrepr::{AffinePiece, ConvexFunction, ScalarKernel, ScalarTerm};
use crate::vecspace::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    Quadratic {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        #[serde(default)]
        c: f64,
    },
    MaxAffine { pieces: Vec<PieceSpec> },
    ScalarComposite { terms: Vec<TermSpec> },
    AffinePlus {
        base: Box<FunctionSpec>,
        l: Vec<f64>,
        #[serde(default)]
        c0: f64,
    },
    Sum { parts: Vec<FunctionSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceSpec {
    pub a: Vec<f64>,
    #[serde(default)]
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub w: f64,
    pub kernel: String,
    pub a: Vec<f64>,
    #[serde(default)]
    pub s: f64,
}

fn field_vec(field: &str, xs: &[f64]) -> Result<Vector> {
    Vector::new(xs.to_vec()).map_err(|e| Error::Spec(format!("field \"{field}\": {e}")))
}

fn field_dim(field: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Spec(format!(
            "field \"{field}\": dimension {found} does not match {expected}"
        )));
    }
    Ok(())
}

impl FunctionSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Spec(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn build(&self) -> Result<ConvexFunction> {
        let wrap = |field: &str, e: Error| match e {
            Error::Spec(_) => e,
            other => Error::Spec(format!("field \"{field}\": {other}")),
        };
        match self {
            FunctionSpec::Quadratic { a, b, c } => {
                let bv = field_vec("b", b)?;
                for row in a {
                    field_dim("A", bv.dim(), row.len())?;
                }
                field_dim("A", bv.dim(), a.len())?;
                let m = Matrix::from_rows(a.clone()).map_err(|e| wrap("A", e))?;
                ConvexFunction::quadratic(m, bv, *c).map_err(|e| wrap("A", e))
            }
            FunctionSpec::MaxAffine { pieces } => {
                if pieces.is_empty() {
                    return Err(Error::Spec("field \"pieces\": must be nonempty".into()));
                }
                let dim = pieces[0].a.len();
                let built = pieces
                    .iter()
                    .map(|p| {
                        field_dim("pieces.a", dim, p.a.len())?;
                        Ok(AffinePiece { slope: field_vec("pieces.a", &p.a)?, offset: p.c })
                    })
                    .collect::<Result<Vec<_>>>()?;
                ConvexFunction::max_affine(built).map_err(|e| wrap("pieces", e))
            }
            FunctionSpec::ScalarComposite { terms } => {
                if terms.is_empty() {
                    return Err(Error::Spec("field \"terms\": must be nonempty".into()));
                }
                let dim = terms[0].a.len();
                let built = terms
                    .iter()
                    .map(|t| {
                        field_dim("terms.a", dim, t.a.len())?;
                        let kernel = ScalarKernel::from_name(&t.kernel).ok_or_else(|| {
                            Error::Spec(format!("field \"kernel\": unknown kernel \"{}\"", t.kernel))
                        })?;
                        Ok(ScalarTerm {
                            weight: t.w,
                            kernel,
                            direction: field_vec("terms.a", &t.a)?,
                            shift: t.s,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                ConvexFunction::scalar_composite(dim, built).map_err(|e| wrap("terms", e))
            }
            FunctionSpec::AffinePlus { base, l, c0 } => {
                let base = base.build()?;
                field_dim("l", base.dim(), l.len())?;
                ConvexFunction::affine_plus(base, field_vec("l", l)?, *c0).map_err(|e| wrap("l", e))
            }
            FunctionSpec::Sum { parts } => {
                if parts.is_empty() {
                    return Err(Error::Spec("field \"parts\": must be nonempty".into()));
                }
                let built = parts.iter().map(|p| p.build()).collect::<Result<Vec<_>>>()?;
                let dim = built[0].dim();
                for p in &built {
                    field_dim("parts", dim, p.dim())?;
                }
                ConvexFunction::sum(built).map_err(|e| wrap("parts", e))
            }
        }
    }

    /// Structural functions only; black boxes have no spec form.
    pub fn from_function(f: &ConvexFunction) -> Result<Self> {
        Ok(match f {
            ConvexFunction::Quadratic(q) => FunctionSpec::Quadratic {
                a: q.a().to_rows(),
                b: q.b().as_slice().to_vec(),
                c: q.c(),
            },
            ConvexFunction::MaxAffine(m) => FunctionSpec::MaxAffine {
                pieces: m
                    .pieces()
                    .iter()
                    .map(|p| PieceSpec { a: p.slope.as_slice().to_vec(), c: p.offset })
                    .collect(),
            },
            ConvexFunction::ScalarComposite(s) => FunctionSpec::ScalarComposite {
                terms: s
                    .terms()
                    .iter()
                    .map(|t| TermSpec {
                        w: t.weight,
                        kernel: t.kernel.name().to_string(),
                        a: t.direction.as_slice().to_vec(),
                        s: t.shift,
                    })
                    .collect(),
            },
            ConvexFunction::AffinePlus(a) => FunctionSpec::AffinePlus {
                base: Box::new(FunctionSpec::from_function(a.base())?),
                l: a.l().as_slice().to_vec(),
                c0: a.c0(),
            },
            ConvexFunction::Sum(parts) => FunctionSpec::Sum {
                parts: parts.iter().map(FunctionSpec::from_function).collect::<Result<_>>()?,
            },
            ConvexFunction::BlackBox(_) => {
                return Err(Error::Spec("black-box functions cannot be exported".into()))
            }
        })
    }
}

/// Parses and builds a function from spec text.
pub fn load_function(text: &str) -> Result<ConvexFunction> {
    FunctionSpec::from_json(text)?.build()
}

//! JSON documents for systems, Gaussian models and ensemble configs, plus a
//! CSV format for discrete joints.
//!
//! Floats are written in shortest round-trip form, so a parsed document
//! re-serialises to the same bytes.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::coupling::{Coupling, PolynomialCoupling};
use crate::ensemble::EnsembleConfig;
use crate::error::{Error, Result};
use crate::independence::{DiscreteJoint, GaussianModel};
use crate::partition::PartitionSpec;
use crate::polynomial::{Monomial, Polynomial};
use crate::potential::Potential;
use crate::system::DiffusionSystem;

pub const SYSTEM_SCHEMA: &str = "blanket-system/1";
pub const GAUSSIAN_SCHEMA: &str = "blanket-gaussian/1";
pub const ENSEMBLE_SCHEMA: &str = "blanket-ensemble/1";

/// Deserialise `text`, reporting the JSON path of the first bad field.
pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: e.path().to_string(),
        detail: e.inner().to_string(),
    })
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Parse {
        path: ".".into(),
        detail: e.to_string(),
    })
}

fn check_schema(found: &Option<String>, expected: &str) -> Result<()> {
    match found {
        Some(s) if s != expected => Err(Error::Parse {
            path: "schema".into(),
            detail: format!("expected `{expected}`, found `{s}`"),
        }),
        _ => Ok(()),
    }
}

pub fn matrix_from_rows(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(r) = rows.iter().position(|row| row.len() != ncols) {
        return Err(Error::structural(
            format!("{field}[{r}]"),
            format!("row has {} entries, expected {ncols}", rows[r].len()),
        ));
    }
    for (r, row) in rows.iter().enumerate() {
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::structural(format!("{field}[{r}][{c}]"), "value must be finite"));
        }
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingEntryDoc {
    pub row: usize,
    pub col: usize,
    pub terms: Vec<Monomial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CouplingDoc {
    Dense(Vec<Vec<f64>>),
    Polynomial { polynomial: Vec<CouplingEntryDoc> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPotential", into = "RawPotential")]
pub enum PotentialDoc {
    Quadratic {
        precision: Vec<Vec<f64>>,
        mean: Option<Vec<f64>>,
    },
    Polynomial { terms: Vec<Monomial> },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum PotentialKind {
    Quadratic,
    Polynomial,
}

// A flat struct rather than a tagged enum, so parse errors keep the full
// path into the matrix or term list.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPotential {
    #[serde(rename = "type")]
    kind: PotentialKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    precision: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    terms: Option<Vec<Monomial>>,
}

impl TryFrom<RawPotential> for PotentialDoc {
    type Error = String;

    fn try_from(raw: RawPotential) -> std::result::Result<Self, String> {
        match (raw.kind, raw.precision, raw.mean, raw.terms) {
            (PotentialKind::Quadratic, Some(precision), mean, None) => Ok(PotentialDoc::Quadratic { precision, mean }),
            (PotentialKind::Quadratic, None, _, _) => Err("quadratic potential needs `precision`".into()),
            (PotentialKind::Quadratic, _, _, Some(_)) => Err("quadratic potential takes no `terms`".into()),
            (PotentialKind::Polynomial, None, None, Some(terms)) => Ok(PotentialDoc::Polynomial { terms }),
            (PotentialKind::Polynomial, _, _, None) => Err("polynomial potential needs `terms`".into()),
            (PotentialKind::Polynomial, _, _, _) => Err("polynomial potential takes only `terms`".into()),
        }
    }
}

impl From<PotentialDoc> for RawPotential {
    fn from(doc: PotentialDoc) -> Self {
        match doc {
            PotentialDoc::Quadratic { precision, mean } => RawPotential {
                kind: PotentialKind::Quadratic,
                precision: Some(precision),
                mean,
                terms: None,
            },
            PotentialDoc::Polynomial { terms } => RawPotential {
                kind: PotentialKind::Polynomial,
                precision: None,
                mean: None,
                terms: Some(terms),
            },
        }
    }
}

/// On-disk form of a [`DiffusionSystem`].
///
/// Exactly one of `partition` and `dim` is given; a missing `q` means `Q = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    pub gamma: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<CouplingDoc>,
    pub potential: PotentialDoc,
}

impl SystemDoc {
    pub fn to_system(&self) -> Result<DiffusionSystem> {
        check_schema(&self.schema, SYSTEM_SCHEMA)?;
        let n = match (self.partition, self.dim) {
            (Some(p), None) => p.n(),
            (None, Some(d)) => d,
            (Some(p), Some(d)) if p.n() == d => d,
            (Some(p), Some(d)) => {
                return Err(Error::structural("dim", format!("{d} disagrees with partition size {}", p.n())))
            }
            (None, None) => return Err(Error::structural("partition", "need `partition` or `dim`")),
        };
        let gamma = matrix_from_rows("gamma", &self.gamma)?;
        let coupling = match &self.q {
            None => Coupling::zero(n),
            Some(CouplingDoc::Dense(rows)) => Coupling::Constant(matrix_from_rows("q", rows)?),
            Some(CouplingDoc::Polynomial { polynomial }) => {
                let entries = polynomial
                    .iter()
                    .map(|e| Ok((e.row, e.col, Polynomial::new(n, e.terms.clone())?)))
                    .collect::<Result<Vec<_>>>()?;
                Coupling::Polynomial(PolynomialCoupling::new(n, entries)?)
            }
        };
        let potential = match &self.potential {
            PotentialDoc::Quadratic { precision, mean } => {
                let precision = matrix_from_rows("potential.precision", precision)?;
                let mean = match mean {
                    Some(m) => DVector::from_vec(m.clone()),
                    None => DVector::zeros(precision.nrows()),
                };
                Potential::quadratic(precision, mean)?
            }
            PotentialDoc::Polynomial { terms } => Potential::polynomial(Polynomial::new(n, terms.clone())?)?,
        };
        match self.partition {
            Some(p) => DiffusionSystem::new(p, gamma, coupling, potential),
            None => DiffusionSystem::unpartitioned(gamma, coupling, potential),
        }
    }

    pub fn from_system(sys: &DiffusionSystem) -> Result<Self> {
        let q = match sys.coupling() {
            Coupling::Constant(q) if q.iter().all(|v| *v == 0.0) => None,
            Coupling::Constant(q) => Some(CouplingDoc::Dense(matrix_to_rows(q))),
            Coupling::Polynomial(p) => Some(CouplingDoc::Polynomial {
                polynomial: p
                    .entries()
                    .iter()
                    .map(|(row, col, poly)| CouplingEntryDoc {
                        row: *row,
                        col: *col,
                        terms: poly.terms().to_vec(),
                    })
                    .collect(),
            }),
            Coupling::Field { .. } => {
                return Err(Error::Configuration("a coupling field has no document form".into()))
            }
        };
        let potential = match sys.potential() {
            Potential::Quadratic { precision, mean } => PotentialDoc::Quadratic {
                precision: matrix_to_rows(precision),
                mean: if mean.iter().all(|v| *v == 0.0) {
                    None
                } else {
                    Some(mean.iter().copied().collect())
                },
            },
            Potential::Polynomial(p) => PotentialDoc::Polynomial {
                terms: p.terms().to_vec(),
            },
        };
        Ok(SystemDoc {
            schema: Some(SYSTEM_SCHEMA.into()),
            partition: sys.partition_opt().copied(),
            dim: if sys.partition_opt().is_some() { None } else { Some(sys.dim()) },
            gamma: matrix_to_rows(sys.gamma()),
            q,
            potential,
        })
    }
}

pub fn parse_system(text: &str) -> Result<DiffusionSystem> {
    from_json::<SystemDoc>(text)?.to_system()
}

pub fn system_to_json(sys: &DiffusionSystem) -> Result<String> {
    to_json(&SystemDoc::from_system(sys)?)
}

/// On-disk form of a [`GaussianModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    pub partition: PartitionSpec,
    pub precision: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
}

impl GaussianDoc {
    pub fn to_model(&self) -> Result<GaussianModel> {
        check_schema(&self.schema, GAUSSIAN_SCHEMA)?;
        let precision = matrix_from_rows("precision", &self.precision)?;
        let mean = self
            .mean
            .clone()
            .map(DVector::from_vec)
            .unwrap_or_else(|| DVector::zeros(precision.nrows()));
        GaussianModel::new(precision, mean, self.partition)
    }
}

/// Ensemble config with an optional schema tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    #[serde(flatten)]
    pub config: EnsembleConfig,
}

pub fn parse_ensemble_config(text: &str) -> Result<EnsembleConfig> {
    let doc: EnsembleDoc = from_json(text)?;
    check_schema(&doc.schema, ENSEMBLE_SCHEMA)?;
    doc.config.validate()?;
    Ok(doc.config)
}

/// Read a joint pmf from CSV: a header naming each variable then `p`, and one
/// row per outcome giving each variable's value index and its probability.
/// Every outcome must appear exactly once; arities are inferred.
pub fn read_discrete_csv(reader: impl Read) -> Result<DiscreteJoint> {
    let csv_err = |e: csv::Error| Error::Parse {
        path: e.position().map_or("csv".into(), |p| format!("line {}", p.line())),
        detail: e.to_string(),
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.len() < 2 || &header[header.len() - 1] != "p" {
        return Err(Error::Parse {
            path: "header".into(),
            detail: "expected variable columns followed by `p`".into(),
        });
    }
    let vars = header.len() - 1;
    let labels: Vec<String> = header.iter().take(vars).map(str::to_owned).collect();
    let mut rows: Vec<(Vec<usize>, f64)> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = r + 2;
        let bad = |col: &str, detail: String| Error::Parse {
            path: format!("line {line}, column `{col}`"),
            detail,
        };
        let mut idx = Vec::with_capacity(vars);
        for v in 0..vars {
            let cell = &rec[v];
            idx.push(cell.parse::<usize>().map_err(|e| bad(&labels[v], format!("`{cell}`: {e}")))?);
        }
        let cell = &rec[vars];
        let p = cell.parse::<f64>().map_err(|e| bad("p", format!("`{cell}`: {e}")))?;
        rows.push((idx, p));
    }
    let arities: Vec<usize> = (0..vars)
        .map(|v| rows.iter().map(|(idx, _)| idx[v] + 1).max().unwrap_or(0))
        .collect();
    let cells: usize = arities.iter().product();
    let mut probs = vec![f64::NAN; cells];
    for (idx, p) in &rows {
        let flat = idx.iter().zip(&arities).fold(0, |acc, (i, a)| acc * a + i);
        if !probs[flat].is_nan() {
            return Err(Error::Parse {
                path: "rows".into(),
                detail: format!("outcome {idx:?} listed twice"),
            });
        }
        probs[flat] = *p;
    }
    if let Some(missing) = probs.iter().position(|p| p.is_nan()) {
        return Err(Error::Parse {
            path: "rows".into(),
            detail: format!("{} of {cells} outcomes missing (first at flat index {missing})", probs.iter().filter(|p| p.is_nan()).count()),
        });
    }
    DiscreteJoint::new(arities, probs, labels)
}

pub fn write_discrete_csv(joint: &DiscreteJoint, writer: impl Write) -> Result<()> {
    let io_err = |e: csv::Error| Error::Parse {
        path: "csv".into(),
        detail: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = joint.labels().to_vec();
    header.push("p".into());
    w.write_record(&header).map_err(io_err)?;
    let arities = joint.arities();
    for (flat, p) in joint.probs().iter().enumerate() {
        let mut rem = flat;
        let mut idx = vec![0; arities.len()];
        for v in (0..arities.len()).rev() {
            idx[v] = rem % arities[v];
            rem /= arities[v];
        }
        let mut rec: Vec<String> = idx.iter().map(usize::to_string).collect();
        rec.push(format!("{p:?}"));
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::Parse {
        path: "csv".into(),
        detail: e.to_string(),
    })
}

//! Versioned JSON documents for fitted models and expectation tables.
//!
//! Floats are written in shortest round-trip form and parsed exactly, so a
//! reloaded model reproduces the original's predictions bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::adapt::{AdaptError, ExpectationPair, ExpectationTable};
use crate::gmm::GmmModel;
use crate::svm::{Scaling, SvmModel};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported format_version {0} (expected {FORMAT_VERSION})")]
    Version(u64),
    #[error("expected a document of kind {expected:?}, found {found:?}")]
    Kind { expected: String, found: String },
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error(transparent)]
    Expectations(#[from] AdaptError),
}

/// Where a fitted model came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: Value,
    pub seed: u64,
    /// Hex SHA-256 of the training CSV bytes.
    pub input_digest: String,
}

#[derive(Serialize, Deserialize)]
struct GmmDocument {
    format_version: u32,
    kind: String,
    dim: usize,
    weights: [f64; 2],
    means: [Vec<f64>; 2],
    variances: [Vec<f64>; 2],
    real_component: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

#[derive(Serialize, Deserialize)]
struct SvmDocument {
    format_version: u32,
    kind: String,
    gamma: f64,
    c: f64,
    bias: f64,
    scaling: Scaling,
    support_vectors: Vec<Vec<f64>>,
    dual_coefs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

#[derive(Serialize, Deserialize)]
struct ExpectationsDocument {
    format_version: u32,
    kind: String,
    features: Vec<ExpectationPair>,
}

/// A model read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelFile {
    Gmm {
        model: GmmModel,
        provenance: Option<Provenance>,
    },
    Svm {
        model: SvmModel,
        provenance: Option<Provenance>,
    },
}

pub fn gmm_to_json(model: &GmmModel, provenance: Option<Provenance>) -> String {
    let doc = GmmDocument {
        format_version: FORMAT_VERSION,
        kind: "gmm".into(),
        dim: model.dim,
        weights: model.weights,
        means: model.means.clone(),
        variances: model.variances.clone(),
        real_component: model.real_component,
        provenance,
    };
    serde_json::to_string_pretty(&doc).expect("gmm serializes") + "\n"
}

pub fn svm_to_json(model: &SvmModel, provenance: Option<Provenance>) -> String {
    let doc = SvmDocument {
        format_version: FORMAT_VERSION,
        kind: "svm".into(),
        gamma: model.gamma,
        c: model.c,
        bias: model.bias,
        scaling: model.scaling.clone(),
        support_vectors: model.support_vectors.clone(),
        dual_coefs: model.dual_coefs.clone(),
        provenance,
    };
    serde_json::to_string_pretty(&doc).expect("svm serializes") + "\n"
}

pub fn expectations_to_json(table: &ExpectationTable) -> String {
    let doc = ExpectationsDocument {
        format_version: FORMAT_VERSION,
        kind: "expectations".into(),
        features: table.features.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("expectations serialize") + "\n"
}

fn header(v: &Value) -> Result<String, PersistError> {
    let version = v
        .get("format_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| PersistError::Invalid("missing format_version".into()))?;
    if version != u64::from(FORMAT_VERSION) {
        return Err(PersistError::Version(version));
    }
    v.get("kind")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| PersistError::Invalid("missing kind".into()))
}

fn check_gmm(m: &GmmModel) -> Result<(), PersistError> {
    let bad = |s: &str| Err(PersistError::Invalid(s.to_string()));
    if m.real_component > 1 {
        return bad("real_component must be 0 or 1");
    }
    if m.means.iter().chain(&m.variances).any(|v| v.len() != m.dim) {
        return bad("means/variances length differs from dim");
    }
    if m.variances
        .iter()
        .flatten()
        .any(|&v| !(v > 0.0 && v.is_finite()))
    {
        return bad("variances must be positive");
    }
    if (m.weights[0] + m.weights[1] - 1.0).abs() > 1e-9
        || m.weights.iter().any(|&w| !(w > 0.0 && w < 1.0))
    {
        return bad("weights must lie in (0, 1) and sum to 1");
    }
    Ok(())
}

fn check_svm(m: &SvmModel) -> Result<(), PersistError> {
    let bad = |s: &str| Err(PersistError::Invalid(s.to_string()));
    let dim = m.scaling.shift.len();
    if m.scaling.scale.len() != dim {
        return bad("scaling shift/scale lengths differ");
    }
    if m.support_vectors.len() != m.dual_coefs.len() {
        return bad("support_vectors and dual_coefs lengths differ");
    }
    if m.support_vectors.iter().any(|sv| sv.len() != dim) {
        return bad("support vector dimension differs from scaling");
    }
    if !(m.gamma > 0.0 && m.c > 0.0) {
        return bad("gamma and c must be positive");
    }
    Ok(())
}

pub fn model_from_json(text: &str) -> Result<ModelFile, PersistError> {
    let v: Value = serde_json::from_str(text)?;
    match header(&v)?.as_str() {
        "gmm" => {
            let d: GmmDocument = serde_json::from_value(v)?;
            let model = GmmModel {
                dim: d.dim,
                weights: d.weights,
                means: d.means,
                variances: d.variances,
                real_component: d.real_component,
            };
            check_gmm(&model)?;
            Ok(ModelFile::Gmm {
                model,
                provenance: d.provenance,
            })
        }
        "svm" => {
            let d: SvmDocument = serde_json::from_value(v)?;
            let model = SvmModel {
                support_vectors: d.support_vectors,
                dual_coefs: d.dual_coefs,
                bias: d.bias,
                gamma: d.gamma,
                c: d.c,
                scaling: d.scaling,
            };
            check_svm(&model)?;
            Ok(ModelFile::Svm {
                model,
                provenance: d.provenance,
            })
        }
        other => Err(PersistError::Kind {
            expected: "gmm or svm".into(),
            found: other.into(),
        }),
    }
}

pub fn expectations_from_json(text: &str) -> Result<ExpectationTable, PersistError> {
    let v: Value = serde_json::from_str(text)?;
    let kind = header(&v)?;
    if kind != "expectations" {
        return Err(PersistError::Kind {
            expected: "expectations".into(),
            found: kind,
        });
    }
    let d: ExpectationsDocument = serde_json::from_value(v)?;
    Ok(ExpectationTable::new(d.features)?)
}

fn read(path: &Path) -> Result<String, PersistError> {
    fs::read_to_string(path).map_err(|source| PersistError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<(), PersistError> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|source| PersistError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_model(path: impl AsRef<Path>) -> Result<ModelFile, PersistError> {
    model_from_json(&read(path.as_ref())?)
}

pub fn read_expectations(path: impl AsRef<Path>) -> Result<ExpectationTable, PersistError> {
    expectations_from_json(&read(path.as_ref())?)
}

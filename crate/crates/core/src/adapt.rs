//! Unsupervised domain adaptation by per-feature expectation scaling.
//!
//! Each domain's feature columns are rescaled by that domain's own pair of
//! 1-D mixture component means, `f̄ = (f − m_0) / (m_1 − m_0)`, which maps the
//! two class modes of every feature to 0 and 1. An SVM trained on the scaled
//! source then predicts the scaled target. Target labels, if present, are
//! used only to report metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalkit::{self, Metrics};
use crate::features::{FeatureRow, FeatureTable, FeatureVector, FEATURE_DIM, FEATURE_NAMES};
use crate::gmm::{self, GmmError, MIN_EXPECTATION_GAP};
use crate::manifest::Label;
use crate::svm::{self, SvmConfig, SvmError, SvmModel};

#[derive(Debug, Error)]
pub enum AdaptError {
    #[error("feature {feature}: expectation pair ({m0}, {m1}) is degenerate; need m1 - m0 >= {MIN_EXPECTATION_GAP}")]
    DegeneratePair { feature: String, m0: f64, m1: f64 },
    #[error("expectation table must list the {FEATURE_DIM} features {FEATURE_NAMES:?} in order, got {0:?}")]
    BadFeatureList(Vec<String>),
    #[error("{domain} feature {feature}: {source}")]
    Estimate {
        domain: &'static str,
        feature: String,
        #[source]
        source: GmmError,
    },
    #[error("source row {0} is unlabeled; the source set must be fully labeled")]
    UnlabeledSource(usize),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Eval(#[from] evalkit::EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationPair {
    pub name: String,
    pub m0: f64,
    pub m1: f64,
}

/// Per-feature `(m_0, m_1)` with `m_1 − m_0 ≥` [`MIN_EXPECTATION_GAP`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationTable {
    pub features: Vec<ExpectationPair>,
}

impl ExpectationTable {
    pub fn new(features: Vec<ExpectationPair>) -> Result<Self, AdaptError> {
        let names: Vec<&str> = features.iter().map(|p| p.name.as_str()).collect();
        if names != FEATURE_NAMES {
            return Err(AdaptError::BadFeatureList(
                features.iter().map(|p| p.name.clone()).collect(),
            ));
        }
        for p in &features {
            let gap = p.m1 - p.m0;
            if !(p.m0.is_finite() && p.m1.is_finite() && gap >= MIN_EXPECTATION_GAP) {
                return Err(AdaptError::DegeneratePair {
                    feature: p.name.clone(),
                    m0: p.m0,
                    m1: p.m1,
                });
            }
        }
        Ok(Self { features })
    }

    pub fn from_pairs(pairs: [(f64, f64); FEATURE_DIM]) -> Result<Self, AdaptError> {
        Self::new(
            FEATURE_NAMES
                .iter()
                .zip(pairs)
                .map(|(name, (m0, m1))| ExpectationPair {
                    name: name.to_string(),
                    m0,
                    m1,
                })
                .collect(),
        )
    }

    /// Fits a 1-D two-component mixture to every column of `table`.
    pub fn estimate(
        table: &FeatureTable,
        seed: u64,
        domain: &'static str,
    ) -> Result<Self, AdaptError> {
        let pairs: Result<Vec<ExpectationPair>, AdaptError> = (0..FEATURE_DIM)
            .into_par_iter()
            .map(|i| {
                let (m0, m1) =
                    gmm::feature_expectations(&table.column(i), seed).map_err(|source| {
                        AdaptError::Estimate {
                            domain,
                            feature: FEATURE_NAMES[i].to_string(),
                            source,
                        }
                    })?;
                Ok(ExpectationPair {
                    name: FEATURE_NAMES[i].to_string(),
                    m0,
                    m1,
                })
            })
            .collect();
        Self::new(pairs?)
    }

    pub fn scale(&self, f: &FeatureVector) -> FeatureVector {
        let mut out = f.to_array();
        for (v, p) in out.iter_mut().zip(&self.features) {
            *v = (*v - p.m0) / (p.m1 - p.m0);
        }
        FeatureVector::from_array(out)
    }
}

/// Rescales every row columnwise. No clipping: outliers may leave `[0, 1]`.
pub fn scale_features(table: &FeatureTable, expectations: &ExpectationTable) -> FeatureTable {
    FeatureTable::new(
        table
            .rows
            .iter()
            .map(|r| FeatureRow {
                path: r.path.clone(),
                label: r.label,
                features: expectations.scale(&r.features),
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Default)]
pub struct AdaptOptions {
    pub svm: SvmConfig,
    pub seed: u64,
    /// Use these instead of estimating from the source table.
    pub source_expectations: Option<ExpectationTable>,
    /// Use these instead of estimating from the target table.
    pub target_expectations: Option<ExpectationTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub path: String,
    pub label: Label,
    pub decision: f64,
}

#[derive(Debug, Clone)]
pub struct AdaptOutput {
    pub predictions: Vec<Prediction>,
    /// Present only when every target row carries a label.
    pub metrics: Option<Metrics>,
    pub source_expectations: ExpectationTable,
    pub target_expectations: ExpectationTable,
    pub model: SvmModel,
}

/// Scale both domains by their own expectations, train on the scaled source,
/// predict the scaled target.
pub fn adapt_and_predict(
    source: &FeatureTable,
    target: &FeatureTable,
    opts: &AdaptOptions,
) -> Result<AdaptOutput, AdaptError> {
    let source_labels: Vec<Label> = source
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| r.label.ok_or(AdaptError::UnlabeledSource(i)))
        .collect::<Result<_, _>>()?;

    let source_exp = match &opts.source_expectations {
        Some(t) => t.clone(),
        None => ExpectationTable::estimate(source, opts.seed, "source")?,
    };
    let target_exp = match &opts.target_expectations {
        Some(t) => t.clone(),
        None => ExpectationTable::estimate(target, opts.seed, "target")?,
    };

    let scaled_source = scale_features(source, &source_exp);
    let (model, _) = svm::smo_train(&scaled_source.matrix(), &source_labels, &opts.svm)?;

    let scaled_target = scale_features(target, &target_exp);
    let predictions = scaled_target
        .rows
        .iter()
        .map(|r| {
            let decision = model.decision(&r.features.to_array())?;
            Ok(Prediction {
                path: r.path.clone(),
                label: Label::from_sign(decision),
                decision,
            })
        })
        .collect::<Result<Vec<_>, SvmError>>()?;

    let metrics = match target.complete_labels() {
        Some(truth) if !truth.is_empty() => {
            let predicted: Vec<Label> = predictions.iter().map(|p| p.label).collect();
            Some(evalkit::evaluate(&truth, &predicted)?)
        }
        _ => None,
    };

    Ok(AdaptOutput {
        predictions,
        metrics,
        source_expectations: source_exp,
        target_expectations: target_exp,
        model,
    })
}

/// `path,predicted_label,decision_value` lines with a header.
pub fn predictions_csv(predictions: &[Prediction]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["path", "predicted_label", "decision_value"])
        .expect("in-memory write");
    for p in predictions {
        w.write_record([
            p.path.clone(),
            p.label.as_digit().to_string(),
            crate::features::format_f64(p.decision),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

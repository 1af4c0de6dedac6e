//! The six spectral-asynchrony descriptors of an image and the feature table
//! that carries them between pipeline stages.
//!
//! For each channel pair `(a, b)` the mean absolute spectrum difference is
//!
//! ```text
//! d_ab = (1 / WH) · Σ_u Σ_v |Spec_a(u, v) − Spec_b(u, v)|
//! ```
//!
//! `mean`, `max` and `min` summarize `{d_rg, d_rb, d_gb}`, and each inverse
//! correlation is `icorr_ab = 1 − ρ(Spec_a, Spec_b)` with ρ the Pearson
//! coefficient over all `W·H` bins, DC included. Every descriptor is zero for
//! an image whose three channels agree.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imageio::{self, ImageError};
use crate::manifest::{DatasetManifest, Label};
use crate::plane::Plane;
use crate::spectral::{self, SpectralError, SpectrumSet};

/// Column names in canonical order.
pub const FEATURE_NAMES: [&str; 6] = ["mean", "max", "min", "icorr_rg", "icorr_rb", "icorr_gb"];
pub const FEATURE_DIM: usize = 6;

/// Variance below which a spectrum counts as constant and ρ is reported as 0.
pub const PEARSON_VARIANCE_EPS: f64 = 1e-12;

const CSV_HEADER: [&str; 8] = [
    "path", "label", "mean", "max", "min", "icorr_rg", "icorr_rb", "icorr_gb",
];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("spectrum planes differ in shape: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("correlation needs at least 2 bins")]
    TooFewBins,
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("{path}: {source}")]
    Entry {
        path: String,
        #[source]
        source: Box<FeatureError>,
    },
    #[error("feature table {path}: {message}")]
    Table { path: String, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    pub icorr_rg: f64,
    pub icorr_rb: f64,
    pub icorr_gb: f64,
}

/// Pairwise mean absolute spectrum differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelDiffs {
    pub rg: f64,
    pub rb: f64,
    pub gb: f64,
}

impl FeatureVector {
    /// Assembles the vector from pairwise differences and Pearson coefficients
    /// `[ρ_rg, ρ_rb, ρ_gb]`.
    pub fn from_parts(d: ChannelDiffs, rho: [f64; 3]) -> Self {
        let ds = [d.rg, d.rb, d.gb];
        Self {
            mean: (d.rg + d.rb + d.gb) / 3.0,
            max: ds.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min: ds.iter().copied().fold(f64::INFINITY, f64::min),
            icorr_rg: 1.0 - rho[0],
            icorr_rb: 1.0 - rho[1],
            icorr_gb: 1.0 - rho[2],
        }
    }

    pub fn to_array(&self) -> [f64; FEATURE_DIM] {
        [
            self.mean,
            self.max,
            self.min,
            self.icorr_rg,
            self.icorr_rb,
            self.icorr_gb,
        ]
    }

    pub fn from_array(a: [f64; FEATURE_DIM]) -> Self {
        Self {
            mean: a[0],
            max: a[1],
            min: a[2],
            icorr_rg: a[3],
            icorr_rb: a[4],
            icorr_gb: a[5],
        }
    }

    pub fn zero() -> Self {
        Self::from_array([0.0; FEATURE_DIM])
    }
}

fn check_shape(a: &Plane, b: &Plane) -> Result<(), FeatureError> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(FeatureError::ShapeMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ))
    }
}

/// Mean absolute difference between two spectra over all bins.
pub fn pairwise_diff(a: &Plane, b: &Plane) -> Result<f64, FeatureError> {
    check_shape(a, b)?;
    let sum: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .sum();
    Ok(sum / a.len() as f64)
}

/// Pearson correlation of the flattened planes. A plane whose variance is
/// below [`PEARSON_VARIANCE_EPS`] yields 0, unless both planes are flat and
/// equal, which yields 1.
pub fn pearson(a: &Plane, b: &Plane) -> Result<f64, FeatureError> {
    check_shape(a, b)?;
    pearson_slices(a.as_slice(), b.as_slice())
}

pub(crate) fn pearson_slices(a: &[f64], b: &[f64]) -> Result<f64, FeatureError> {
    let n = a.len();
    if n < 2 {
        return Err(FeatureError::TooFewBins);
    }
    let nf = n as f64;
    let mean_a = a.iter().sum::<f64>() / nf;
    let mean_b = b.iter().sum::<f64>() / nf;
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        saa += dx * dx;
        sbb += dy * dy;
        sab += dx * dy;
    }
    let flat_a = saa / nf < PEARSON_VARIANCE_EPS;
    let flat_b = sbb / nf < PEARSON_VARIANCE_EPS;
    if flat_a || flat_b {
        // identical flat planes (an all-black image) still agree perfectly
        return Ok(if flat_a && flat_b && a == b { 1.0 } else { 0.0 });
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

pub fn channel_diffs(spectra: &SpectrumSet) -> Result<ChannelDiffs, FeatureError> {
    Ok(ChannelDiffs {
        rg: pairwise_diff(&spectra.red, &spectra.green)?,
        rb: pairwise_diff(&spectra.red, &spectra.blue)?,
        gb: pairwise_diff(&spectra.green, &spectra.blue)?,
    })
}

/// Reduces three channel spectra to the six descriptors.
pub fn extract(spectra: &SpectrumSet) -> Result<FeatureVector, FeatureError> {
    let d = channel_diffs(spectra)?;
    let rho = [
        pearson(&spectra.red, &spectra.green)?,
        pearson(&spectra.red, &spectra.blue)?,
        pearson(&spectra.green, &spectra.blue)?,
    ];
    Ok(FeatureVector::from_parts(d, rho))
}

/// Convenience: image → spectra → features.
pub fn image_features(img: &imageio::RgbImage) -> Result<FeatureVector, FeatureError> {
    extract(&spectral::spectrum(img)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub path: String,
    pub label: Option<Label>,
    pub features: FeatureVector,
}

/// Ordered rows of per-image features, optionally labeled.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn new(rows: Vec<FeatureRow>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| r.features.to_array().to_vec())
            .collect()
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.features.to_array()[i]).collect()
    }

    pub fn labels(&self) -> Vec<Option<Label>> {
        self.rows.iter().map(|r| r.label).collect()
    }

    /// All labels, or `None` if any row is unlabeled.
    pub fn complete_labels(&self) -> Option<Vec<Label>> {
        self.rows.iter().map(|r| r.label).collect()
    }

    /// Serializes with 17 significant digits per value so reading back is
    /// lossless.
    pub fn to_csv_string(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for row in &self.rows {
            let mut record = vec![
                row.path.clone(),
                row.label
                    .map(|l| l.as_digit().to_string())
                    .unwrap_or_default(),
            ];
            record.extend(row.features.to_array().iter().map(|v| format_f64(*v)));
            w.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), FeatureError> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|source| FeatureError::Io {
            path: path.display().to_string(),
            source,
        })?;
        f.write_all(self.to_csv_string().as_bytes())
            .map_err(|source| FeatureError::Io {
                path: path.display().to_string(),
                source,
            })
    }

    pub fn from_csv_str(text: &str, origin: &str) -> Result<Self, FeatureError> {
        let bad = |message: String| FeatureError::Table {
            path: origin.to_string(),
            message,
        };
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.iter().collect::<Vec<_>>() != CSV_HEADER {
            return Err(bad(format!(
                "expected header {}, found {}",
                CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let line = i + 2;
            let label = match &rec[1] {
                "" => None,
                "0" => Some(Label::Real),
                "1" => Some(Label::Fake),
                other => return Err(bad(format!("line {line}: bad label {other:?}"))),
            };
            let mut vals = [0.0f64; FEATURE_DIM];
            for (j, v) in vals.iter_mut().enumerate() {
                *v = rec[j + 2].trim().parse().map_err(|_| {
                    bad(format!(
                        "line {line}: {} is not a number: {:?}",
                        FEATURE_NAMES[j],
                        &rec[j + 2]
                    ))
                })?;
                if !v.is_finite() {
                    return Err(bad(format!("line {line}: non-finite {}", FEATURE_NAMES[j])));
                }
            }
            rows.push(FeatureRow {
                path: rec[0].to_string(),
                label,
                features: FeatureVector::from_array(vals),
            });
        }
        Ok(Self { rows })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, FeatureError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| FeatureError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv_str(&text, &path.display().to_string())
    }
}

/// Scientific notation with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BatchOptions {
    /// Skip unreadable entries (reported in [`BatchOutput::skipped`]) instead
    /// of aborting.
    pub permissive: bool,
    /// Worker threads; 0 means rayon's default.
    pub jobs: usize,
}


#[derive(Debug)]
pub struct BatchOutput {
    pub table: FeatureTable,
    pub skipped: Vec<(String, FeatureError)>,
}

/// Extracts features for every manifest entry, in manifest order regardless
/// of the worker count.
pub fn extract_batch(
    manifest: &DatasetManifest,
    opts: BatchOptions,
) -> Result<BatchOutput, FeatureError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| FeatureError::Pool(e.to_string()))?;
    let results: Vec<Result<FeatureVector, FeatureError>> = pool.install(|| {
        manifest
            .entries
            .par_iter()
            .map(|e| {
                let img = imageio::load_image(manifest.resolve(e))?;
                image_features(&img)
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(results.len());
    let mut skipped = Vec::new();
    for (entry, res) in manifest.entries.iter().zip(results) {
        match res {
            Ok(features) => rows.push(FeatureRow {
                path: entry.path.clone(),
                label: entry.label,
                features,
            }),
            Err(err) if opts.permissive => skipped.push((entry.path.clone(), err)),
            Err(err) => {
                return Err(FeatureError::Entry {
                    path: entry.path.clone(),
                    source: Box::new(err),
                })
            }
        }
    }
    Ok(BatchOutput {
        table: FeatureTable { rows },
        skipped,
    })
}

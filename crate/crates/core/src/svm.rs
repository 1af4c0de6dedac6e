//! Soft-margin binary SVM with an RBF kernel, trained by sequential minimal
//! optimization.
//!
//! Labels are encoded real = −1, fake = +1. Features are standardized per
//! column before training and the transform is stored with the model, so
//! callers always pass raw feature vectors.
//!
//! The solver works on the dual
//!
//! ```text
//! min_α  ½ αᵀQα − Σα   s.t.  yᵀα = 0,  0 ≤ α ≤ C,   Q_ij = y_i y_j K(x_i, x_j)
//! ```
//!
//! picking at each step the maximal violating pair
//! `i = argmax_{I_up} −y_t∇_t`, `j = argmin_{I_low} −y_t∇_t` (lowest index on
//! ties) and stopping once the gap between the two falls to `tol`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::Label;

const TAU: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SvmError {
    #[error("training data has no {missing} samples; both classes are required")]
    SingleClass { missing: Label },
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("non-finite feature at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("model expects {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid SVM config: {0}")]
    InvalidConfig(String),
}

/// RBF bandwidth choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gamma {
    /// `1 / (dim · Var)` over all standardized training entries.
    Scale,
    Value(f64),
}

impl std::str::FromStr for Gamma {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("scale") {
            return Ok(Gamma::Scale);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(Gamma::Value(v)),
            _ => Err(format!(
                "gamma must be \"scale\" or a positive number, got {s:?}"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub gamma: Gamma,
    /// Largest allowed maximal-violating-pair gap at convergence.
    pub tol: f64,
    /// Cap on pair updates.
    pub max_passes: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: Gamma::Scale,
            tol: 1e-3,
            max_passes: 10_000_000,
        }
    }
}

/// Per-feature `(x − shift) / scale` applied before the kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaling {
    pub fn identity(dim: usize) -> Self {
        Self {
            shift: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Column means and population standard deviations; constant columns get
    /// scale 1.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mut shift = vec![0.0; dim];
        let mut scale = vec![1.0; dim];
        for d in 0..dim {
            let mean = rows.iter().map(|r| r[d]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / n;
            shift[d] = mean;
            if var > 0.0 {
                scale[d] = var.sqrt();
            }
        }
        Self { shift, scale }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.shift.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// Stored in standardized coordinates.
    pub support_vectors: Vec<Vec<f64>>,
    /// `α_i · y_i` for each support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    pub scaling: Scaling,
}

/// Diagnostics from a training run.
#[derive(Debug, Clone)]
pub struct SmoReport {
    /// Final α for every training row.
    pub alphas: Vec<f64>,
    /// Decision values of the training rows derived from the solver's
    /// gradient cache, without recomputing kernels.
    pub train_decisions: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final maximal-violating-pair gap.
    pub gap: f64,
    /// Kernel matrix bandwidth actually used.
    pub gamma: f64,
}

pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Dense RBF Gram matrix, row-major.
pub fn kernel_matrix(rows: &[Vec<f64>], gamma: f64) -> Vec<f64> {
    let n = rows.len();
    let mut k = vec![0.0; n * n];
    k.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = rbf_kernel(&rows[i], &rows[j], gamma);
        }
    });
    k
}

/// Dual objective `Σα − ½ αᵀQα` (to be maximized) for sign labels `y`.
pub fn dual_objective(alphas: &[f64], y: &[f64], kernel: &[f64]) -> f64 {
    let n = alphas.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alphas[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alphas[i] * alphas[j] * y[i] * y[j] * kernel[i * n + j];
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

/// Largest KKT violation measured on `y·f(x)`, given α and decision values.
pub fn kkt_violation(alphas: &[f64], y: &[f64], decisions: &[f64], c: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for ((&a, &yi), &f) in alphas.iter().zip(y).zip(decisions) {
        let margin = yi * f;
        let v = if a <= 0.0 {
            (1.0 - margin).max(0.0)
        } else if a >= c {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}

pub(crate) struct DualSolution {
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub gap: f64,
}

fn in_up(a: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(a: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

pub(crate) fn solve_dual(
    kernel: &[f64],
    y: &[f64],
    c: f64,
    tol: f64,
    max_iter: usize,
) -> DualSolution {
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * kernel[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut converged = false;
    let mut gap = f64::INFINITY;

    while iterations < max_iter {
        let (mut i, mut g_max) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut g_min) = (usize::MAX, f64::INFINITY);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t], c) && v > g_max {
                g_max = v;
                i = t;
            }
            if in_low(alpha[t], y[t], c) && v < g_min {
                g_min = v;
                j = t;
            }
        }
        gap = g_max - g_min;
        if i == usize::MAX || j == usize::MAX || gap <= tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (qii, qjj, qij) = (q(i, i), q(j, j), q(i, j));
        if y[i] != y[j] {
            let mut quad = qii + qjj + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = qii + qjj - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(i, t) * di + q(j, t) * dj;
        }
    }

    // ρ: average of y∇ over free α, else midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };

    DualSolution {
        alphas: alpha,
        rho,
        gradient: grad,
        iterations,
        converged,
        gap,
    }
}

fn validate_training(
    features: &[Vec<f64>],
    labels: &[Label],
    cfg: &SvmConfig,
) -> Result<usize, SvmError> {
    if !(cfg.c.is_finite() && cfg.c > 0.0) {
        return Err(SvmError::InvalidConfig(format!(
            "C must be positive, got {}",
            cfg.c
        )));
    }
    if !(cfg.tol.is_finite() && cfg.tol > 0.0) {
        return Err(SvmError::InvalidConfig(format!(
            "tol must be positive, got {}",
            cfg.tol
        )));
    }
    if let Gamma::Value(g) = cfg.gamma {
        if !(g.is_finite() && g > 0.0) {
            return Err(SvmError::InvalidConfig(format!(
                "gamma must be positive, got {g}"
            )));
        }
    }
    if features.len() != labels.len() {
        return Err(SvmError::LengthMismatch {
            features: features.len(),
            labels: labels.len(),
        });
    }
    if features.len() < 2 {
        return Err(SvmError::TooFewSamples(features.len()));
    }
    for missing in [Label::Real, Label::Fake] {
        if !labels.contains(&missing) {
            return Err(SvmError::SingleClass { missing });
        }
    }
    let dim = features[0].len();
    for (row, r) in features.iter().enumerate() {
        if r.len() != dim {
            return Err(SvmError::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        if let Some(col) = r.iter().position(|v| !v.is_finite()) {
            return Err(SvmError::NonFinite { row, col });
        }
    }
    Ok(dim)
}

/// Resolves the bandwidth for standardized rows.
pub fn resolve_gamma(gamma: Gamma, standardized: &[Vec<f64>]) -> f64 {
    match gamma {
        Gamma::Value(g) => g,
        Gamma::Scale => {
            let dim = standardized.first().map_or(1, Vec::len).max(1);
            let all: Vec<f64> = standardized.iter().flatten().copied().collect();
            let n = all.len() as f64;
            let mean = all.iter().sum::<f64>() / n;
            let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                1.0 / (dim as f64 * var)
            } else {
                1.0
            }
        }
    }
}

/// Trains on raw feature rows with their labels.
pub fn smo_train(
    features: &[Vec<f64>],
    labels: &[Label],
    cfg: &SvmConfig,
) -> Result<(SvmModel, SmoReport), SvmError> {
    validate_training(features, labels, cfg)?;
    let scaling = Scaling::fit(features);
    let z: Vec<Vec<f64>> = features.iter().map(|r| scaling.apply(r)).collect();
    let gamma = resolve_gamma(cfg.gamma, &z);
    let y: Vec<f64> = labels.iter().map(|l| l.as_sign()).collect();
    let kernel = kernel_matrix(&z, gamma);
    let sol = solve_dual(&kernel, &y, cfg.c, cfg.tol, cfg.max_passes);

    let train_decisions = sol
        .gradient
        .iter()
        .zip(&y)
        .map(|(g, yi)| yi * (g + 1.0) - sol.rho)
        .collect();
    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for (t, &a) in sol.alphas.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(z[t].clone());
            dual_coefs.push(a * y[t]);
        }
    }
    let model = SvmModel {
        support_vectors,
        dual_coefs,
        bias: -sol.rho,
        gamma,
        c: cfg.c,
        scaling,
    };
    let report = SmoReport {
        alphas: sol.alphas,
        train_decisions,
        iterations: sol.iterations,
        converged: sol.converged,
        gap: sol.gap,
        gamma,
    };
    Ok((model, report))
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.scaling.dim()
    }

    /// `Σ coef_i · K(sv_i, scaled x) + bias`. Positive means fake.
    pub fn decision(&self, x: &[f64]) -> Result<f64, SvmError> {
        if x.len() != self.dim() {
            return Err(SvmError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let z = self.scaling.apply(x);
        let sum: f64 = self
            .support_vectors
            .iter()
            .zip(&self.dual_coefs)
            .map(|(sv, coef)| coef * rbf_kernel(sv, &z, self.gamma))
            .sum();
        Ok(sum + self.bias)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label, SvmError> {
        Ok(Label::from_sign(self.decision(x)?))
    }
}

//! Two-component diagonal Gaussian mixture fit by expectation-maximization.
//!
//! Used two ways: a 6-D fit over feature vectors classifies images without
//! labels (the component with the smaller `mean` feature is the real class),
//! and 1-D fits over single feature columns supply the pair of component
//! means that domain adaptation rescales by.
//!
//! EM runs on per-dimension standardized data, which makes every fit
//! equivariant under positive affine maps of the input columns. The variance
//! floor is applied in those standardized units; parameters are reported in
//! the original units.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::Label;

/// Lower bound on every component variance, in standardized units.
pub const VARIANCE_FLOOR: f64 = 1e-9;
/// Smallest accepted gap between the two 1-D component means.
pub const MIN_EXPECTATION_GAP: f64 = 1e-9;
pub const MIN_SAMPLES: usize = 4;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error, PartialEq)]
pub enum GmmError {
    #[error("need at least {MIN_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("row {row} has {got} columns, expected {expected}")]
    RaggedRow {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("degenerate fit: {0}")]
    Degenerate(String),
    #[error("model has dimension {expected}, input has {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Stop once the log-likelihood gains less than this in one iteration.
    pub tol: f64,
    pub seed: u64,
    /// Extra fits from seeded random soft assignments; the best final
    /// log-likelihood wins.
    pub n_restarts: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-8,
            seed: 0,
            n_restarts: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub dim: usize,
    pub weights: [f64; 2],
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
    /// Component whose mean along dimension 0 is smaller.
    pub real_component: usize,
}

/// Result of [`em_fit`] with its convergence trace.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: GmmModel,
    /// Log-likelihood of the data (original units) before each M-step.
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmPrediction {
    pub label: Label,
    /// Responsibility of the predicted component.
    pub posterior: f64,
    /// Responsibility of the fake component.
    pub fake_posterior: f64,
}

struct Standardizer {
    shift: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(data: &[Vec<f64>], dim: usize) -> Result<Self, GmmError> {
        let n = data.len() as f64;
        let mut shift = vec![0.0; dim];
        let mut scale = vec![1.0; dim];
        let mut any_spread = false;
        for d in 0..dim {
            let mean = data.iter().map(|r| r[d]).sum::<f64>() / n;
            let var = data.iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / n;
            shift[d] = mean;
            if var > 0.0 {
                scale[d] = var.sqrt();
                any_spread = true;
            }
        }
        if !any_spread {
            return Err(GmmError::Degenerate("all samples are identical".into()));
        }
        Ok(Self { shift, scale })
    }

    fn apply(&self, data: &[Vec<f64>]) -> Vec<Vec<f64>> {
        data.iter()
            .map(|r| {
                r.iter()
                    .zip(self.shift.iter().zip(&self.scale))
                    .map(|(v, (m, s))| (v - m) / s)
                    .collect()
            })
            .collect()
    }

    fn log_jacobian(&self) -> f64 {
        self.scale.iter().map(|s| s.ln()).sum()
    }
}

#[derive(Clone)]
struct Params {
    weights: [f64; 2],
    means: [Vec<f64>; 2],
    variances: [Vec<f64>; 2],
}

fn validate(data: &[Vec<f64>]) -> Result<usize, GmmError> {
    if data.len() < MIN_SAMPLES {
        return Err(GmmError::TooFewSamples(data.len()));
    }
    let dim = data[0].len();
    if dim == 0 {
        return Err(GmmError::Degenerate("zero-dimensional data".into()));
    }
    for (row, r) in data.iter().enumerate() {
        if r.len() != dim {
            return Err(GmmError::RaggedRow {
                row,
                got: r.len(),
                expected: dim,
            });
        }
        if let Some(col) = r.iter().position(|v| !v.is_finite()) {
            return Err(GmmError::NonFinite { row, col });
        }
    }
    Ok(dim)
}

fn component_log_density(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((xi, mi), vi) in x.iter().zip(mean).zip(var) {
        let d = xi - mi;
        acc += LN_2PI + vi.ln() + d * d / vi;
    }
    -0.5 * acc
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// E-step: responsibilities of component 1 and the total log-likelihood.
fn e_step(z: &[Vec<f64>], p: &Params, resp1: &mut [f64]) -> f64 {
    let lw = [p.weights[0].ln(), p.weights[1].ln()];
    let mut ll = 0.0;
    for (x, r) in z.iter().zip(resp1.iter_mut()) {
        let l0 = lw[0] + component_log_density(x, &p.means[0], &p.variances[0]);
        let l1 = lw[1] + component_log_density(x, &p.means[1], &p.variances[1]);
        let total = log_sum_exp(l0, l1);
        *r = (l1 - total).exp();
        ll += total;
    }
    ll
}

/// M-step from soft assignments to component 1.
fn m_step(z: &[Vec<f64>], resp1: &[f64], dim: usize) -> Result<Params, GmmError> {
    let n = z.len() as f64;
    let mut mass = [0.0; 2];
    let mut means = [vec![0.0; dim], vec![0.0; dim]];
    for (x, &r1) in z.iter().zip(resp1) {
        let r = [1.0 - r1, r1];
        for k in 0..2 {
            mass[k] += r[k];
            for d in 0..dim {
                means[k][d] += r[k] * x[d];
            }
        }
    }
    for k in 0..2 {
        if !(mass[k] > 1e-12 * n) {
            return Err(GmmError::Degenerate(format!(
                "component {k} lost all responsibility"
            )));
        }
        for m in &mut means[k] {
            *m /= mass[k];
        }
    }
    let mut variances = [vec![0.0; dim], vec![0.0; dim]];
    for (x, &r1) in z.iter().zip(resp1) {
        let r = [1.0 - r1, r1];
        for k in 0..2 {
            for d in 0..dim {
                variances[k][d] += r[k] * (x[d] - means[k][d]).powi(2);
            }
        }
    }
    for k in 0..2 {
        for v in &mut variances[k] {
            *v = (*v / mass[k]).max(VARIANCE_FLOOR);
        }
    }
    let w1 = mass[1] / n;
    Ok(Params {
        weights: [1.0 - w1, w1],
        means,
        variances,
    })
}

/// Lower half along dimension 0 seeds component 0, upper half component 1.
fn quantile_split(z: &[Vec<f64>]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[a][0].total_cmp(&z[b][0]).then(a.cmp(&b)));
    let mut resp1 = vec![0.0; z.len()];
    for &i in &order[z.len() / 2..] {
        resp1[i] = 1.0;
    }
    resp1
}

fn run_em(
    z: &[Vec<f64>],
    dim: usize,
    init_resp1: Vec<f64>,
    cfg: &EmConfig,
) -> Result<(Params, Vec<f64>, bool), GmmError> {
    let mut resp1 = init_resp1;
    let mut params = m_step(z, &resp1, dim)?;
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iters.max(1) {
        let ll = e_step(z, &params, &mut resp1);
        if let Some(&prev) = trace.last() {
            trace.push(ll);
            if ll - prev < cfg.tol {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }
        params = m_step(z, &resp1, dim)?;
    }
    Ok((params, trace, converged))
}

/// Fits a two-component diagonal mixture by EM.
pub fn em_fit(data: &[Vec<f64>], cfg: &EmConfig) -> Result<EmFit, GmmError> {
    let dim = validate(data)?;
    let standardizer = Standardizer::fit(data, dim)?;
    let z = standardizer.apply(data);

    let mut best = run_em(&z, dim, quantile_split(&z), cfg)?;
    if cfg.n_restarts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for _ in 0..cfg.n_restarts {
            let init: Vec<f64> = (0..z.len()).map(|_| rng.random_range(0.0..1.0)).collect();
            if let Ok(candidate) = run_em(&z, dim, init, cfg) {
                let better = candidate.1.last().copied().unwrap_or(f64::NEG_INFINITY)
                    > best.1.last().copied().unwrap_or(f64::NEG_INFINITY);
                if better {
                    best = candidate;
                }
            }
        }
    }
    let (params, trace, converged) = best;

    let offset = data.len() as f64 * standardizer.log_jacobian();
    let log_likelihoods = trace.iter().map(|ll| ll - offset).collect();

    let unscale = |k: usize| -> (Vec<f64>, Vec<f64>) {
        let mean = (0..dim)
            .map(|d| params.means[k][d] * standardizer.scale[d] + standardizer.shift[d])
            .collect();
        let var = (0..dim)
            .map(|d| params.variances[k][d] * standardizer.scale[d].powi(2))
            .collect();
        (mean, var)
    };
    let (m0, v0) = unscale(0);
    let (m1, v1) = unscale(1);
    let real_component = usize::from(m1[0] < m0[0]);
    Ok(EmFit {
        model: GmmModel {
            dim,
            weights: params.weights,
            means: [m0, m1],
            variances: [v0, v1],
            real_component,
        },
        log_likelihoods,
        converged,
    })
}

impl GmmModel {
    pub fn fake_component(&self) -> usize {
        1 - self.real_component
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), GmmError> {
        if x.len() == self.dim {
            Ok(())
        } else {
            Err(GmmError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            })
        }
    }

    /// Posterior responsibilities `[r_0, r_1]` of `x`.
    pub fn responsibilities(&self, x: &[f64]) -> Result<[f64; 2], GmmError> {
        self.check_dim(x)?;
        let l = [0, 1].map(|k| {
            self.weights[k].ln() + component_log_density(x, &self.means[k], &self.variances[k])
        });
        let total = log_sum_exp(l[0], l[1]);
        Ok([(l[0] - total).exp(), (l[1] - total).exp()])
    }

    pub fn log_likelihood(&self, data: &[Vec<f64>]) -> Result<f64, GmmError> {
        let mut ll = 0.0;
        for x in data {
            self.check_dim(x)?;
            let l = [0, 1].map(|k| {
                self.weights[k].ln() + component_log_density(x, &self.means[k], &self.variances[k])
            });
            ll += log_sum_exp(l[0], l[1]);
        }
        Ok(ll)
    }

    /// Assigns `x` to the component with the larger responsibility.
    pub fn classify(&self, x: &[f64]) -> Result<GmmPrediction, GmmError> {
        let r = self.responsibilities(x)?;
        let winner = usize::from(r[1] > r[0]);
        let label = if winner == self.real_component {
            Label::Real
        } else {
            Label::Fake
        };
        Ok(GmmPrediction {
            label,
            posterior: r[winner],
            fake_posterior: r[self.fake_component()],
        })
    }
}

/// The two component means `(m_0, m_1)`, `m_0 < m_1`, of a 1-D mixture fit
/// to one feature column.
pub fn feature_expectations(values: &[f64], seed: u64) -> Result<(f64, f64), GmmError> {
    let data: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
    let fit = em_fit(
        &data,
        &EmConfig {
            seed,
            ..EmConfig::default()
        },
    )?;
    let (a, b) = (fit.model.means[0][0], fit.model.means[1][0]);
    let (m0, m1) = if a <= b { (a, b) } else { (b, a) };
    if !(m1 - m0 >= MIN_EXPECTATION_GAP) {
        return Err(GmmError::Degenerate(format!(
            "component means {m0} and {m1} are closer than {MIN_EXPECTATION_GAP}"
        )));
    }
    Ok((m0, m1))
}

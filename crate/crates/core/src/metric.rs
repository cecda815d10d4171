//! Adaptive relevance metrics, the functional time-domain distance and the
//! margin-based metric learning machinery.
//!
//! The metric lives in the data space: a diagonal relevance vector `lambda`
//! weights squared per-feature differences, a full matrix `omega` induces the
//! pseudo-metric `(x-t)' omega' omega (x-t)`. During training the metric is
//! kept on the constraint surface `||lambda|| = 1` (diagonal) respectively
//! `trace(omega' omega) = 1` (full) by renormalizing after every gradient
//! step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::GtmTtModel;
use crate::util::MatrixDef;

/// Which metric family is learned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Diagonal,
    Full,
}

/// Adaptive metric parameters: a non-negative relevance vector or a full
/// square matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricParams {
    Diagonal(DVector<f64>),
    Full(DMatrix<f64>),
}

/// Serialized form of [`MetricParams`] (row-major matrix payload).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum MetricDef {
    Diagonal { lambda: Vec<f64> },
    Full { omega: MatrixDef },
}

impl Serialize for MetricParams {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let def = match self {
            MetricParams::Diagonal(l) => MetricDef::Diagonal {
                lambda: l.iter().cloned().collect(),
            },
            MetricParams::Full(o) => MetricDef::Full {
                omega: MatrixDef::from_matrix(o),
            },
        };
        def.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MetricParams {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        match MetricDef::deserialize(deserializer)? {
            MetricDef::Diagonal { lambda } => Ok(MetricParams::Diagonal(DVector::from_vec(lambda))),
            MetricDef::Full { omega } => Ok(MetricParams::Full(
                omega.to_matrix().map_err(serde::de::Error::custom)?,
            )),
        }
    }
}

impl MetricParams {
    /// Uniform metric of the requested kind on the constraint surface.
    pub fn uniform(kind: MetricKind, dim: usize) -> Self {
        match kind {
            MetricKind::Diagonal => Self::uniform_diagonal(dim),
            MetricKind::Full => Self::uniform_full(dim),
        }
    }

    /// `lambda = (1/sqrt(D), ..., 1/sqrt(D))`, so `||lambda|| = 1`.
    pub fn uniform_diagonal(dim: usize) -> Self {
        MetricParams::Diagonal(DVector::from_element(dim, 1.0 / (dim as f64).sqrt()))
    }

    /// `omega = I / sqrt(D)`, so `trace(omega' omega) = 1`.
    pub fn uniform_full(dim: usize) -> Self {
        MetricParams::Full(DMatrix::identity(dim, dim) / (dim as f64).sqrt())
    }

    /// Unnormalized all-ones relevance vector: the plain squared Euclidean
    /// distance. Useful as a reference metric in tests and diagnostics.
    pub fn euclidean(dim: usize) -> Self {
        MetricParams::Diagonal(DVector::from_element(dim, 1.0))
    }

    pub fn kind(&self) -> MetricKind {
        match self {
            MetricParams::Diagonal(_) => MetricKind::Diagonal,
            MetricParams::Full(_) => MetricKind::Full,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            MetricParams::Diagonal(l) => l.len(),
            MetricParams::Full(o) => o.ncols(),
        }
    }

    /// Squared metric distance between row `ra` of `a` and row `rb` of `b`.
    ///
    /// This is the distance the Gaussian emissions are evaluated with.
    pub fn squared_row_distance(
        &self,
        a: &DMatrix<f64>,
        ra: usize,
        b: &DMatrix<f64>,
        rb: usize,
    ) -> f64 {
        match self {
            MetricParams::Diagonal(lambda) => {
                let mut acc = 0.0;
                for d in 0..lambda.len() {
                    let diff = a[(ra, d)] - b[(rb, d)];
                    let l = lambda[d];
                    acc += l * l * diff * diff;
                }
                acc
            }
            MetricParams::Full(omega) => {
                let dim = omega.ncols();
                let mut acc = 0.0;
                for i in 0..dim {
                    let mut w = 0.0;
                    for d in 0..dim {
                        w += omega[(i, d)] * (a[(ra, d)] - b[(rb, d)]);
                    }
                    acc += w * w;
                }
                acc
            }
        }
    }

    /// Squared metric distance between two vectors.
    pub fn squared_distance(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        match self {
            MetricParams::Diagonal(lambda) => lambda
                .iter()
                .zip(a.iter().zip(b.iter()))
                .map(|(&l, (&x, &y))| l * l * (x - y) * (x - y))
                .sum(),
            MetricParams::Full(omega) => {
                let w = omega * (a - b);
                w.norm_squared()
            }
        }
    }

    /// Per-dimension relevance: `lambda` itself, or the column scales
    /// `sqrt(diag(omega' omega))` of the full metric. Either way the squared
    /// entries sum to 1 on the constraint surface.
    pub fn relevance_vector(&self) -> Vec<f64> {
        match self {
            MetricParams::Diagonal(l) => l.iter().cloned().collect(),
            MetricParams::Full(o) => (0..o.ncols())
                .map(|d| o.column(d).norm_squared().sqrt())
                .collect(),
        }
    }

    /// Distance of the parameters from the constraint surface:
    /// `| ||lambda|| - 1 |` or `| trace(omega' omega) - 1 |`.
    pub fn constraint_residual(&self) -> f64 {
        match self {
            MetricParams::Diagonal(l) => (l.norm() - 1.0).abs(),
            MetricParams::Full(o) => (o.norm_squared() - 1.0).abs(),
        }
    }
}

/// Gradient (or averaged update direction) with the same shape as the metric.
#[derive(Debug, Clone)]
pub enum MetricDelta {
    Diagonal(DVector<f64>),
    Full(DMatrix<f64>),
}

impl MetricDelta {
    pub fn zeros_like(metric: &MetricParams) -> Self {
        match metric {
            MetricParams::Diagonal(l) => MetricDelta::Diagonal(DVector::zeros(l.len())),
            MetricParams::Full(o) => MetricDelta::Full(DMatrix::zeros(o.nrows(), o.ncols())),
        }
    }

    pub fn add_assign(&mut self, other: &MetricDelta) -> Result<()> {
        match (self, other) {
            (MetricDelta::Diagonal(a), MetricDelta::Diagonal(b)) if a.len() == b.len() => {
                *a += b;
                Ok(())
            }
            (MetricDelta::Full(a), MetricDelta::Full(b)) if a.shape() == b.shape() => {
                *a += b;
                Ok(())
            }
            _ => Err(Error::Config("mismatched metric gradient shapes".into())),
        }
    }

    pub fn scale(&mut self, c: f64) {
        match self {
            MetricDelta::Diagonal(a) => *a *= c,
            MetricDelta::Full(a) => *a *= c,
        }
    }
}

/// Time-domain distance applied per feature dimension to compare a sequence
/// with its reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeDistance {
    /// Functional norm with triangle terms; sensitive to sign crossings of
    /// the difference series.
    Func { tau: f64, p: u32 },
    /// Plain Euclidean norm over the time course.
    Euclidean,
}

/// Functional distance between two equally long series.
///
/// The norm is evaluated on the difference series `w = u - v`, with the
/// boundary convention that the entries just outside the series are zero.
/// For a difference series without sign changes it reduces to `tau` times
/// the plain p-norm; sign crossings shrink the triangle terms.
pub fn func_distance(u: &[f64], v: &[f64], tau: f64, p: u32) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Data(format!(
            "functional distance over series of different lengths ({} vs {})",
            u.len(),
            v.len()
        )));
    }
    if u.is_empty() {
        return Err(Error::Data("functional distance over empty series".into()));
    }
    if !(tau > 0.0) || p == 0 {
        return Err(Error::Config(format!(
            "functional distance needs tau > 0 and p >= 1, got tau={tau}, p={p}"
        )));
    }
    let w: Vec<f64> = u.iter().zip(v.iter()).map(|(a, b)| a - b).collect();
    Ok(func_norm(&w, tau, p))
}

/// The functional norm of a difference series.
fn func_norm(w: &[f64], tau: f64, p: u32) -> f64 {
    let n = w.len();
    let at = |i: isize| -> f64 {
        if i < 0 || i as usize >= n {
            0.0
        } else {
            w[i as usize]
        }
    };
    let half_tau = 0.5 * tau;
    let mut sum = 0.0;
    for k in 0..n {
        let wk = w[k];
        let prev = at(k as isize - 1);
        let next = at(k as isize + 1);
        // Left/right triangle areas; the crossing branch divides by
        // |wk| + |neighbor|, which is positive whenever the product is
        // negative.
        let a = if wk * prev >= 0.0 {
            half_tau * wk.abs()
        } else {
            half_tau * wk * wk / (wk.abs() + prev.abs())
        };
        let b = if wk * next >= 0.0 {
            half_tau * wk.abs()
        } else {
            half_tau * wk * wk / (wk.abs() + next.abs())
        };
        sum += (a + b).powi(p as i32);
    }
    sum.powf(1.0 / p as f64)
}

/// Per-dimension time-domain distances between a sequence and a
/// reconstruction (both `T x D`, rows = time steps).
pub fn time_distance_profile(
    x_seq: &DMatrix<f64>,
    x_hat: &DMatrix<f64>,
    td: &TimeDistance,
) -> Result<DVector<f64>> {
    if x_seq.shape() != x_hat.shape() {
        return Err(Error::Data(format!(
            "sequence {:?} and reconstruction {:?} have different shapes",
            x_seq.shape(),
            x_hat.shape()
        )));
    }
    let (t_len, dim) = x_seq.shape();
    let mut out = DVector::zeros(dim);
    let mut u = vec![0.0; t_len];
    let mut v = vec![0.0; t_len];
    for d in 0..dim {
        for t in 0..t_len {
            u[t] = x_seq[(t, d)];
            v[t] = x_hat[(t, d)];
        }
        out[d] = match td {
            TimeDistance::Func { tau, p } => func_distance(&u, &v, *tau, *p)?,
            TimeDistance::Euclidean => u
                .iter()
                .zip(v.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
        };
    }
    Ok(out)
}

/// Metric-weighted squared distance over a vector of per-dimension
/// time-domain distances: `sum_d lambda_d^2 dt_d^2` for the diagonal metric,
/// `dt' omega' omega dt` for the full one.
pub fn weighted_distance(dt: &DVector<f64>, metric: &MetricParams) -> Result<f64> {
    if dt.len() != metric.dim() {
        return Err(Error::Data(format!(
            "distance profile of length {} against metric of dimension {}",
            dt.len(),
            metric.dim()
        )));
    }
    if dt.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::Data(
            "per-dimension distances must be finite and non-negative".into(),
        ));
    }
    let zero = DVector::zeros(dt.len());
    Ok(metric.squared_distance(dt, &zero))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Margin cost for one sequence given the squared distances to the correct
/// (`d_plus`) and closest wrong (`d_minus`) reconstruction.
///
/// Returns `sgd((d+ - d-)/(d+ + d-))`; the degenerate case `d+ = d- = 0` is
/// defined as `sgd(0) = 0.5`.
pub fn grgtm_cost(d_plus: f64, d_minus: f64) -> f64 {
    debug_assert!(d_plus >= 0.0 && d_minus >= 0.0);
    let denom = d_plus + d_minus;
    if denom == 0.0 {
        return 0.5;
    }
    sigmoid((d_plus - d_minus) / denom)
}

/// Analytic gradient of the per-sequence margin cost with respect to the
/// metric parameters, given precomputed per-dimension time-domain distance
/// profiles to the correct (`dt_plus`) and closest wrong (`dt_minus`)
/// reconstruction.
///
/// The correct-model and wrong-model contributions act on the same global
/// metric, so the result is their sum.
pub fn metric_gradient_from_profiles(
    dt_plus: &DVector<f64>,
    dt_minus: &DVector<f64>,
    metric: &MetricParams,
) -> Result<MetricDelta> {
    let d_plus = weighted_distance(dt_plus, metric)?;
    let d_minus = weighted_distance(dt_minus, metric)?;
    let denom = d_plus + d_minus;
    if denom == 0.0 {
        return Ok(MetricDelta::zeros_like(metric));
    }
    let margin = (d_plus - d_minus) / denom;
    let s = sigmoid(margin);
    let sgd_prime = s * (1.0 - s);
    let coeff_plus = 2.0 * sgd_prime * d_minus / (denom * denom);
    let coeff_minus = 2.0 * sgd_prime * d_plus / (denom * denom);

    let delta = match metric {
        MetricParams::Diagonal(lambda) => {
            let mut g = DVector::zeros(lambda.len());
            for i in 0..lambda.len() {
                let dp = 2.0 * lambda[i] * dt_plus[i] * dt_plus[i];
                let dm = 2.0 * lambda[i] * dt_minus[i] * dt_minus[i];
                g[i] = coeff_plus * dp - coeff_minus * dm;
            }
            MetricDelta::Diagonal(g)
        }
        MetricParams::Full(omega) => {
            // d d_omega / d omega_ij = 2 (omega v)_i v_j
            let wp = omega * dt_plus;
            let wm = omega * dt_minus;
            let gp = 2.0 * &wp * dt_plus.transpose();
            let gm = 2.0 * &wm * dt_minus.transpose();
            MetricDelta::Full(coeff_plus * gp - coeff_minus * gm)
        }
    };
    let finite = match &delta {
        MetricDelta::Diagonal(g) => g.iter().all(|v| v.is_finite()),
        MetricDelta::Full(g) => g.iter().all(|v| v.is_finite()),
    };
    if !finite {
        return Err(Error::Numerical(
            "non-finite metric gradient contribution".into(),
        ));
    }
    Ok(delta)
}

/// Gradient of the margin cost for one sequence against its two
/// reconstructions, with the time-domain distances computed internally.
pub fn metric_gradient(
    x_seq: &DMatrix<f64>,
    recon_plus: &Reconstruction,
    recon_minus: &Reconstruction,
    metric: &MetricParams,
    td: &TimeDistance,
) -> Result<MetricDelta> {
    let dt_plus = time_distance_profile(x_seq, &recon_plus.x_hat, td)?;
    let dt_minus = time_distance_profile(x_seq, &recon_minus.x_hat, td)?;
    metric_gradient_from_profiles(&dt_plus, &dt_minus, metric)
}

/// Descend by `epsilon` along the averaged gradient, clip diagonal entries
/// to be non-negative and project back onto the constraint surface.
pub fn apply_metric_update(
    metric: &MetricParams,
    avg_gradient: &MetricDelta,
    epsilon: f64,
) -> Result<MetricParams> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("learning rate must be > 0, got {epsilon}")));
    }
    match (metric, avg_gradient) {
        (MetricParams::Diagonal(lambda), MetricDelta::Diagonal(grad)) => {
            if lambda.len() != grad.len() {
                return Err(Error::Config("mismatched metric gradient shapes".into()));
            }
            let mut next = lambda - epsilon * grad;
            for v in next.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let norm = next.norm();
            if norm <= f64::EPSILON {
                log::warn!("relevance vector collapsed to zero; resetting to uniform");
                return Ok(MetricParams::uniform_diagonal(lambda.len()));
            }
            next /= norm;
            Ok(MetricParams::Diagonal(next))
        }
        (MetricParams::Full(omega), MetricDelta::Full(grad)) => {
            if omega.shape() != grad.shape() {
                return Err(Error::Config("mismatched metric gradient shapes".into()));
            }
            let next = omega - epsilon * grad;
            let trace = next.norm_squared();
            if trace <= f64::EPSILON {
                log::warn!("metric matrix collapsed to zero; resetting to uniform");
                return Ok(MetricParams::uniform_full(omega.ncols()));
            }
            Ok(MetricParams::Full(next / trace.sqrt()))
        }
        _ => Err(Error::Config("mismatched metric/gradient kinds".into())),
    }
}

/// Whether metric learning runs in the given (1-based) epoch: true strictly
/// after the warm-up phase that lets the class models position themselves.
pub fn relevance_active(epoch: usize, start_after: usize) -> bool {
    epoch > start_after
}

/// Per-time-step prototype path of a sequence under one class model.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// `T x D`; row `t` is the prototype row of the winning state at `t`.
    pub x_hat: DMatrix<f64>,
    /// Winning (argmax-responsibility) state index per time step, 0-based.
    pub winner_path: Vec<usize>,
    /// Label of the submodel the reconstruction was taken from.
    pub source_label: String,
}

/// Reconstruct a sequence through a class model: per time step the state
/// with maximal responsibility wins (ties go to the lower state index) and
/// contributes its prototype row.
pub fn reconstruct(
    x_seq: &DMatrix<f64>,
    submodel: &GtmTtModel,
    metric: &MetricParams,
    source_label: &str,
) -> Result<Reconstruction> {
    let fb = submodel.responsibilities(x_seq, metric)?;
    let protos = submodel.prototypes();
    let (t_len, _) = x_seq.shape();
    let mut winner_path = Vec::with_capacity(t_len);
    let mut x_hat = DMatrix::zeros(t_len, protos.ncols());
    for t in 0..t_len {
        let mut best = 0;
        let mut best_val = fb.resp[(t, 0)];
        for k in 1..protos.nrows() {
            if fb.resp[(t, k)] > best_val {
                best_val = fb.resp[(t, k)];
                best = k;
            }
        }
        winner_path.push(best);
        for d in 0..protos.ncols() {
            x_hat[(t, d)] = protos[(best, d)];
        }
    }
    Ok(Reconstruction {
        x_hat,
        winner_path,
        source_label: source_label.to_string(),
    })
}

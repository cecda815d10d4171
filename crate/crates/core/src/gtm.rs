//! Static latent-grid machinery: the regular 2-D grid, the Gaussian RBF
//! basis, the latent-to-data mapping and the i.i.d. EM update steps.
//!
//! These pieces initialize and drive the per-class sequence models in
//! [`crate::hmm`]; they are also usable on their own as a plain topographic
//! mixture.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::MetricParams;
use crate::util::logsumexp;

/// Hard ceiling for the inverse variance; prevents collapsed emissions from
/// producing non-finite log-densities.
pub const BETA_MAX: f64 = 1e8;

/// Relative ridge added to the Gram diagonal in the weight solve.
const SOLVE_JITTER: f64 = 1e-8;

/// Regular grid of latent points spanning `[-1, 1]^2`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentGrid {
    pub rows: usize,
    pub cols: usize,
    /// `K = rows * cols` coordinates `[x, y]`; index `k = r * cols + c`.
    pub points: Vec<[f64; 2]>,
}

fn axis_coords(n: usize) -> Vec<f64> {
    if n == 1 {
        vec![0.0]
    } else {
        (0..n)
            .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
            .collect()
    }
}

impl LatentGrid {
    /// Build a `rows x cols` grid with equally spaced points.
    pub fn build(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || rows * cols < 2 {
            return Err(Error::Config(format!(
                "latent grid needs at least 2 points, got {rows}x{cols}"
            )));
        }
        let xs = axis_coords(cols);
        let ys = axis_coords(rows);
        let mut points = Vec::with_capacity(rows * cols);
        for &y in &ys {
            for &x in &xs {
                points.push([x, y]);
            }
        }
        Ok(Self { rows, cols, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distance between adjacent grid points (smallest over the axes that
    /// have more than one point).
    pub fn spacing(&self) -> f64 {
        let mut spacing = f64::INFINITY;
        if self.cols > 1 {
            spacing = spacing.min(2.0 / (self.cols - 1) as f64);
        }
        if self.rows > 1 {
            spacing = spacing.min(2.0 / (self.rows - 1) as f64);
        }
        if spacing.is_finite() {
            spacing
        } else {
            2.0
        }
    }

    pub fn squared_distance(&self, i: usize, j: usize) -> f64 {
        let a = self.points[i];
        let b = self.points[j];
        (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
    }
}

/// Gaussian basis functions on a regular sub-grid of the latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    pub rows: usize,
    pub cols: usize,
    pub centers: Vec<[f64; 2]>,
    /// Common Gaussian width `sigma_phi`.
    pub width: f64,
    pub includes_bias: bool,
}

impl BasisSet {
    /// Regular basis layout with the default width heuristic: twice the
    /// spacing between adjacent centers (the full span when an axis has a
    /// single center). A bias column is included.
    pub fn regular(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config("basis grid needs at least one center".into()));
        }
        let xs = axis_coords(cols);
        let ys = axis_coords(rows);
        let mut centers = Vec::with_capacity(rows * cols);
        for &y in &ys {
            for &x in &xs {
                centers.push([x, y]);
            }
        }
        let mut spacing: f64 = 0.0;
        if cols > 1 {
            spacing = spacing.max(2.0 / (cols - 1) as f64);
        }
        if rows > 1 {
            spacing = spacing.max(2.0 / (rows - 1) as f64);
        }
        if spacing == 0.0 {
            spacing = 2.0;
        }
        Ok(Self {
            rows,
            cols,
            centers,
            width: 2.0 * spacing,
            includes_bias: true,
        })
    }

    /// Number of basis centers `M`.
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Number of columns of the activation matrix (`M + 1` with bias).
    pub fn n_outputs(&self) -> usize {
        self.centers.len() + usize::from(self.includes_bias)
    }
}

/// Static mapping parameters: basis activations, weights and the inverse
/// variance of the Gaussian emissions.
#[derive(Debug, Clone, PartialEq)]
pub struct GtmParams {
    /// `K x M'` basis activations, row `k` evaluated at grid point `k`.
    pub phi: DMatrix<f64>,
    /// `M' x D` mapping weights.
    pub weights: DMatrix<f64>,
    /// Inverse variance, `> 0`.
    pub beta: f64,
}

/// Evaluate the basis at every grid point: entry `(k, m)` is
/// `exp(-||w_k - c_m||^2 / (2 sigma^2))`, plus a trailing column of ones
/// when the basis carries a bias.
pub fn compute_phi(grid: &LatentGrid, basis: &BasisSet) -> DMatrix<f64> {
    let k = grid.len();
    let m_out = basis.n_outputs();
    let denom = 2.0 * basis.width * basis.width;
    let mut phi = DMatrix::zeros(k, m_out);
    for (ki, w) in grid.points.iter().enumerate() {
        for (mi, c) in basis.centers.iter().enumerate() {
            let d2 = (w[0] - c[0]).powi(2) + (w[1] - c[1]).powi(2);
            phi[(ki, mi)] = (-d2 / denom).exp();
        }
        if basis.includes_bias {
            phi[(ki, m_out - 1)] = 1.0;
        }
    }
    phi
}

/// Map every grid point into data space: `Y = Phi * W`, one prototype row
/// per latent point.
pub fn map_prototypes(params: &GtmParams) -> Result<DMatrix<f64>> {
    if params.phi.ncols() != params.weights.nrows() {
        return Err(Error::Data(format!(
            "phi has {} columns but weights {} rows",
            params.phi.ncols(),
            params.weights.nrows()
        )));
    }
    Ok(&params.phi * &params.weights)
}

/// Log-density of one observation under the Gaussian attached to one
/// prototype, with the squared distance taken under the adaptive metric.
pub fn emission_logpdf(
    x: &DVector<f64>,
    y_k: &DVector<f64>,
    beta: f64,
    metric: &MetricParams,
) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::Config(format!("beta must be positive, got {beta}")));
    }
    if x.iter().chain(y_k.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite emission input".into()));
    }
    let d = x.len() as f64;
    let dist = metric.squared_distance(x, y_k);
    Ok(0.5 * d * (beta / (2.0 * std::f64::consts::PI)).ln() - 0.5 * beta * dist)
}

/// `T x K` table of emission log-densities for a sequence against a
/// prototype matrix.
pub fn log_emission_table(
    x_seq: &DMatrix<f64>,
    protos: &DMatrix<f64>,
    beta: f64,
    metric: &MetricParams,
) -> Result<DMatrix<f64>> {
    if x_seq.ncols() != protos.ncols() {
        return Err(Error::Data(format!(
            "sequence has {} features but prototypes {}",
            x_seq.ncols(),
            protos.ncols()
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::Config(format!("beta must be positive, got {beta}")));
    }
    let (t_len, d) = x_seq.shape();
    let k = protos.nrows();
    let norm_const = 0.5 * d as f64 * (beta / (2.0 * std::f64::consts::PI)).ln();
    let mut table = DMatrix::zeros(t_len, k);
    for t in 0..t_len {
        for ki in 0..k {
            let dist = metric.squared_row_distance(x_seq, t, protos, ki);
            let v = norm_const - 0.5 * beta * dist;
            if !v.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite emission log-density at time step {t}"
                )));
            }
            table[(t, ki)] = v;
        }
    }
    Ok(table)
}

/// Static responsibilities (`N x K`): softmax over prototypes of the
/// emission log-densities, with equal mixture priors.
pub fn gtm_responsibilities(
    x: &DMatrix<f64>,
    params: &GtmParams,
    metric: &MetricParams,
) -> Result<DMatrix<f64>> {
    let protos = map_prototypes(params)?;
    let table = log_emission_table(x, &protos, params.beta, metric)?;
    let (n, k) = table.shape();
    let mut resp = DMatrix::zeros(n, k);
    let mut row = vec![0.0; k];
    for i in 0..n {
        for ki in 0..k {
            row[ki] = table[(i, ki)];
        }
        let lse = logsumexp(&row);
        for ki in 0..k {
            resp[(i, ki)] = (row[ki] - lse).exp();
        }
    }
    Ok(resp)
}

/// Solve the weight system from accumulated statistics: `g` holds the
/// per-prototype responsibility mass, `rx` the responsibility-weighted data
/// sums (`K x D`).
pub(crate) fn solve_weights_from_stats(
    phi: &DMatrix<f64>,
    g: &DVector<f64>,
    rx: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let m_out = phi.ncols();
    // Phi' G Phi with G = diag(g)
    let mut weighted_phi = phi.clone();
    for (ki, mut row) in weighted_phi.row_iter_mut().enumerate() {
        row *= g[ki];
    }
    let mut gram = phi.transpose() * weighted_phi;
    let jitter = SOLVE_JITTER * gram.trace() / m_out as f64;
    for i in 0..m_out {
        gram[(i, i)] += jitter;
    }
    let rhs = phi.transpose() * rx;
    let mut solution = match Cholesky::new(gram.clone()) {
        Some(chol) => chol.solve(&rhs),
        None => {
            let lu = gram.clone().lu();
            lu.solve(&rhs)
                .ok_or_else(|| Error::Numerical("singular weight system after ridge jitter".into()))?
        }
    };
    // one step of iterative refinement against the unjittered system; the
    // ridge keeps the solve stable but would otherwise leave a residual of
    // the jitter's magnitude
    for i in 0..m_out {
        gram[(i, i)] -= jitter;
    }
    let residual = &rhs - &gram * &solution;
    for i in 0..m_out {
        gram[(i, i)] += jitter;
    }
    if let Some(chol) = Cholesky::new(gram) {
        solution += chol.solve(&residual);
    }
    Ok(solution)
}

/// One M-step weight solve: `Phi' G Phi W = Phi' R X` with responsibilities
/// `resp` (`N x K`, rows sum to 1) and data `x` (`N x D`).
pub fn solve_weights(
    phi: &DMatrix<f64>,
    resp: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if resp.nrows() != x.nrows() || resp.ncols() != phi.nrows() {
        return Err(Error::Data(format!(
            "incompatible shapes: phi {:?}, resp {:?}, x {:?}",
            phi.shape(),
            resp.shape(),
            x.shape()
        )));
    }
    let g = resp.row_sum().transpose();
    let rx = resp.transpose() * x;
    solve_weights_from_stats(phi, &g, &rx)
}

/// Inverse-variance update: the responsibility-weighted mean squared
/// metric distance between data points and the freshly mapped prototypes.
pub fn update_beta(
    phi: &DMatrix<f64>,
    weights: &DMatrix<f64>,
    resp: &DMatrix<f64>,
    x: &DMatrix<f64>,
    metric: &MetricParams,
) -> Result<f64> {
    let protos = phi * weights;
    let (n, d) = x.shape();
    let k = protos.nrows();
    if resp.nrows() != n || resp.ncols() != k {
        return Err(Error::Data(format!(
            "responsibilities {:?} do not match data {:?} / prototypes {:?}",
            resp.shape(),
            x.shape(),
            protos.shape()
        )));
    }
    let mut total = 0.0;
    for i in 0..n {
        for ki in 0..k {
            total += resp[(i, ki)] * metric.squared_row_distance(x, i, &protos, ki);
        }
    }
    let inv_beta = total / (n as f64 * d as f64);
    if !inv_beta.is_finite() {
        return Err(Error::Numerical("non-finite variance update".into()));
    }
    if inv_beta <= 1.0 / BETA_MAX {
        Ok(BETA_MAX)
    } else {
        Ok(1.0 / inv_beta)
    }
}

/// Data log-likelihood of the static mixture (equal priors `1/K`).
pub fn static_loglik(x: &DMatrix<f64>, params: &GtmParams, metric: &MetricParams) -> Result<f64> {
    let protos = map_prototypes(params)?;
    let table = log_emission_table(x, &protos, params.beta, metric)?;
    let (n, k) = table.shape();
    let log_prior = -(k as f64).ln();
    let mut row = vec![0.0; k];
    let mut total = 0.0;
    for i in 0..n {
        for ki in 0..k {
            row[ki] = table[(i, ki)];
        }
        total += log_prior + logsumexp(&row);
    }
    Ok(total)
}

/// Initialize weights so that the prototypes approximate the plane of the
/// two leading principal components, scaled by the corresponding standard
/// deviations; `beta` starts from the larger of the variance orthogonal to
/// that plane and half the mean squared nearest-prototype distance.
pub fn init_from_pca(
    x_flat: &DMatrix<f64>,
    grid: &LatentGrid,
    basis: &BasisSet,
) -> Result<GtmParams> {
    let (n, d) = x_flat.shape();
    if n < 2 {
        return Err(Error::Data(format!(
            "PCA initialization needs at least 2 observations, got {n}"
        )));
    }
    let phi = compute_phi(grid, basis);

    let mean = x_flat.row_mean();
    let mut centered = x_flat.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let svd = centered.clone().svd(false, true);
    let sv = &svd.singular_values;
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or_else(|| Error::Numerical("SVD failed in PCA initialization".into()))?;

    let usable = sv.iter().filter(|&&s| s > 1e-12 * sv[0].max(1.0)).count();
    let weights = if usable < 2 || d < 2 {
        // Rank-deficient data: small random weights, fixed seed so the
        // fallback stays deterministic.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        DMatrix::from_fn(basis.n_outputs(), d, |_, _| {
            1e-2 * (rng.random::<f64>() * 2.0 - 1.0)
        })
    } else {
        let scale = |i: usize| (sv[i] * sv[i] / (n as f64 - 1.0)).sqrt();
        let (s1, s2) = (scale(0), scale(1));
        let mut target = DMatrix::zeros(grid.len(), d);
        for (ki, w) in grid.points.iter().enumerate() {
            for di in 0..d {
                target[(ki, di)] =
                    mean[di] + w[0] * s1 * v_t[(0, di)] + w[1] * s2 * v_t[(1, di)];
            }
        }
        // Least squares Phi W = target
        let m_out = phi.ncols();
        let mut gram = phi.transpose() * &phi;
        let jitter = SOLVE_JITTER * gram.trace() / m_out as f64;
        for i in 0..m_out {
            gram[(i, i)] += jitter;
        }
        let rhs = phi.transpose() * &target;
        Cholesky::new(gram)
            .map(|c| c.solve(&rhs))
            .ok_or_else(|| Error::Numerical("singular basis Gram in PCA initialization".into()))?
    };

    let protos = &phi * &weights;
    let k = protos.nrows();
    let mut nn_total = 0.0;
    for i in 0..k {
        let mut best = f64::INFINITY;
        for j in 0..k {
            if i != j {
                let mut d2 = 0.0;
                for di in 0..d {
                    let diff = protos[(i, di)] - protos[(j, di)];
                    d2 += diff * diff;
                }
                best = best.min(d2);
            }
        }
        nn_total += best;
    }
    let half_avg_nn = 0.5 * nn_total / k as f64;
    let orth_var = if sv.len() > 2 {
        sv[2] * sv[2] / (n as f64 - 1.0)
    } else {
        0.0
    };
    let inv_beta = half_avg_nn.max(orth_var);
    let beta = if inv_beta <= 1.0 / BETA_MAX {
        BETA_MAX
    } else {
        1.0 / inv_beta
    };

    Ok(GtmParams { phi, weights, beta })
}

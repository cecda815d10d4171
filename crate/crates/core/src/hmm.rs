//! The sequence layer: latent grid points act as hidden states of an HMM
//! whose emissions are the Gaussians of the static mapping.
//!
//! All recursions run in scaled form. Emission log-densities are shifted by
//! their per-step maximum before exponentiation, and the forward table is
//! renormalized at every step; the stored log scaling factors absorb both,
//! so the sequence log-likelihood is exactly the sum of the log scales and
//! no intermediate can underflow for realistic dimensionalities.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gtm::{
    self, compute_phi, log_emission_table, map_prototypes, BasisSet, GtmParams, LatentGrid,
    BETA_MAX,
};
use crate::metric::MetricParams;

/// Probability floor applied to initial and transition probabilities after
/// each M-step, so EM cannot lock states out permanently.
const PROB_FLOOR: f64 = 1e-8;

/// One class-conditional sequence model: shared latent geometry, mapping
/// parameters and the Markov chain over grid states.
#[derive(Debug, Clone, PartialEq)]
pub struct GtmTtModel {
    pub grid: LatentGrid,
    pub basis: BasisSet,
    pub gtm: GtmParams,
    /// Initial state probabilities, length `K`.
    pub pi: DVector<f64>,
    /// Row-stochastic `K x K` transition matrix.
    pub a: DMatrix<f64>,
}

/// Scaled forward pass over one sequence.
#[derive(Debug, Clone)]
pub struct ScaledForward {
    /// `T x K`, each row sums to 1.
    pub alpha_hat: DMatrix<f64>,
    /// Log of the per-step scaling factor; summing them gives the sequence
    /// log-likelihood.
    pub log_scale: Vec<f64>,
    /// Per-step emission shift (row maximum of the emission log-densities);
    /// the backward pass must undo the same shift.
    pub emission_shift: Vec<f64>,
    pub loglik: f64,
}

/// Forward-backward tables, responsibilities and accumulated pairwise state
/// statistics for one sequence.
#[derive(Debug, Clone)]
pub struct ForwardBackwardResult {
    pub alpha_hat: DMatrix<f64>,
    pub beta_hat: DMatrix<f64>,
    pub log_scale: Vec<f64>,
    /// `T x K` state responsibilities; each row sums to 1.
    pub resp: DMatrix<f64>,
    /// Summed pairwise statistics `sum_t xi_t(i, j)`, `K x K`.
    pub xi_sum: DMatrix<f64>,
    pub loglik: f64,
}

/// Scaled forward recursion over an emission log-density table.
pub fn forward_scaled(
    pi: &DVector<f64>,
    a: &DMatrix<f64>,
    log_emis: &DMatrix<f64>,
) -> Result<ScaledForward> {
    let (t_len, k) = log_emis.shape();
    if t_len == 0 {
        return Err(Error::Data("empty sequence".into()));
    }
    if pi.len() != k || a.nrows() != k || a.ncols() != k {
        return Err(Error::Data(format!(
            "chain parameters ({} states, {:?} transitions) do not match emission table with {k} states",
            pi.len(),
            a.shape()
        )));
    }

    let mut alpha_hat = DMatrix::zeros(t_len, k);
    let mut log_scale = vec![0.0; t_len];
    let mut emission_shift = vec![0.0; t_len];
    let mut shifted = DMatrix::zeros(t_len, k);
    for t in 0..t_len {
        let m = (0..k).map(|s| log_emis[(t, s)]).fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(Error::Numerical(format!(
                "emission mass vanished at time step {t}"
            )));
        }
        emission_shift[t] = m;
        for s in 0..k {
            shifted[(t, s)] = (log_emis[(t, s)] - m).exp();
        }
    }

    for s in 0..k {
        alpha_hat[(0, s)] = pi[s] * shifted[(0, s)];
    }
    let c0: f64 = alpha_hat.row(0).sum();
    if !(c0 > 0.0) || !c0.is_finite() {
        return Err(Error::Numerical(
            "forward mass vanished at time step 0".into(),
        ));
    }
    for s in 0..k {
        alpha_hat[(0, s)] /= c0;
    }
    log_scale[0] = c0.ln() + emission_shift[0];

    for t in 1..t_len {
        for j in 0..k {
            let mut acc = 0.0;
            for i in 0..k {
                acc += alpha_hat[(t - 1, i)] * a[(i, j)];
            }
            alpha_hat[(t, j)] = acc * shifted[(t, j)];
        }
        let ct: f64 = alpha_hat.row(t).sum();
        if !(ct > 0.0) || !ct.is_finite() {
            return Err(Error::Numerical(format!(
                "forward mass vanished at time step {t}"
            )));
        }
        for j in 0..k {
            alpha_hat[(t, j)] /= ct;
        }
        log_scale[t] = ct.ln() + emission_shift[t];
    }

    let loglik = log_scale.iter().sum();
    Ok(ScaledForward {
        alpha_hat,
        log_scale,
        emission_shift,
        loglik,
    })
}

/// Scaled backward recursion, consistent with the scaling of a matching
/// forward pass: the last row is all ones and
/// `sum_k alpha_hat[t][k] * beta_hat[t][k] = 1` at every step.
pub fn backward_scaled(
    a: &DMatrix<f64>,
    log_emis: &DMatrix<f64>,
    fwd: &ScaledForward,
) -> Result<DMatrix<f64>> {
    let (t_len, k) = log_emis.shape();
    if fwd.log_scale.len() != t_len {
        return Err(Error::Data(
            "scaling factors do not match the emission table".into(),
        ));
    }
    let mut beta_hat = DMatrix::zeros(t_len, k);
    for s in 0..k {
        beta_hat[(t_len - 1, s)] = 1.0;
    }
    for t in (0..t_len - 1).rev() {
        // scale of step t+1 without the emission shift
        let c_next = (fwd.log_scale[t + 1] - fwd.emission_shift[t + 1]).exp();
        for i in 0..k {
            let mut acc = 0.0;
            for j in 0..k {
                let p_next = (log_emis[(t + 1, j)] - fwd.emission_shift[t + 1]).exp();
                acc += a[(i, j)] * p_next * beta_hat[(t + 1, j)];
            }
            beta_hat[(t, i)] = acc / c_next;
        }
    }
    Ok(beta_hat)
}

/// Full forward-backward over an emission log-density table: scaled tables,
/// responsibilities, pairwise statistics and the log-likelihood.
pub fn forward_backward(
    pi: &DVector<f64>,
    a: &DMatrix<f64>,
    log_emis: &DMatrix<f64>,
) -> Result<ForwardBackwardResult> {
    let fwd = forward_scaled(pi, a, log_emis)?;
    let beta_hat = backward_scaled(a, log_emis, &fwd)?;
    let (t_len, k) = log_emis.shape();

    let mut resp = DMatrix::zeros(t_len, k);
    for t in 0..t_len {
        for s in 0..k {
            resp[(t, s)] = fwd.alpha_hat[(t, s)] * beta_hat[(t, s)];
        }
    }

    let mut xi_sum = DMatrix::zeros(k, k);
    for t in 1..t_len {
        let c_t = (fwd.log_scale[t] - fwd.emission_shift[t]).exp();
        for i in 0..k {
            let alpha_prev = fwd.alpha_hat[(t - 1, i)];
            if alpha_prev == 0.0 {
                continue;
            }
            for j in 0..k {
                let p_t = (log_emis[(t, j)] - fwd.emission_shift[t]).exp();
                xi_sum[(i, j)] += alpha_prev * a[(i, j)] * p_t * beta_hat[(t, j)] / c_t;
            }
        }
    }

    Ok(ForwardBackwardResult {
        alpha_hat: fwd.alpha_hat,
        beta_hat,
        log_scale: fwd.log_scale,
        resp,
        xi_sum,
        loglik: fwd.loglik,
    })
}

/// Most probable state path (log-domain max-product). Ties break toward the
/// lower state index.
pub fn viterbi_from_log(
    pi: &DVector<f64>,
    a: &DMatrix<f64>,
    log_emis: &DMatrix<f64>,
) -> Vec<usize> {
    let (t_len, k) = log_emis.shape();
    let mut delta = DMatrix::from_element(t_len, k, f64::NEG_INFINITY);
    let mut back = DMatrix::zeros(t_len, k);
    for s in 0..k {
        delta[(0, s)] = pi[s].ln() + log_emis[(0, s)];
    }
    for t in 1..t_len {
        for j in 0..k {
            let mut best_i = 0;
            let mut best = f64::NEG_INFINITY;
            for i in 0..k {
                let v = delta[(t - 1, i)] + a[(i, j)].ln();
                if v > best {
                    best = v;
                    best_i = i;
                }
            }
            delta[(t, j)] = best + log_emis[(t, j)];
            back[(t, j)] = best_i;
        }
    }
    let mut path = vec![0usize; t_len];
    let mut best = f64::NEG_INFINITY;
    for s in 0..k {
        if delta[(t_len - 1, s)] > best {
            best = delta[(t_len - 1, s)];
            path[t_len - 1] = s;
        }
    }
    for t in (0..t_len - 1).rev() {
        path[t] = back[(t + 1, path[t + 1])];
    }
    path
}

/// Topology-constrained transition initialization: transitions decay with
/// the latent distance between states, `a_ij ~ exp(-||w_i - w_j||^2 /
/// (2 sigma^2))` with `sigma` equal to the grid spacing, rows normalized.
pub fn topology_transition_init(grid: &LatentGrid) -> DMatrix<f64> {
    let k = grid.len();
    let sigma = grid.spacing();
    let denom = 2.0 * sigma * sigma;
    let mut a = DMatrix::zeros(k, k);
    for i in 0..k {
        let mut row_sum = 0.0;
        for j in 0..k {
            let v = (-grid.squared_distance(i, j) / denom).exp();
            a[(i, j)] = v;
            row_sum += v;
        }
        for j in 0..k {
            a[(i, j)] /= row_sum;
        }
    }
    a
}

fn floor_and_renormalize(values: &mut [f64]) {
    if values.iter().any(|&v| v < PROB_FLOOR) {
        let mut sum = 0.0;
        for v in values.iter_mut() {
            if *v < PROB_FLOOR {
                *v = PROB_FLOOR;
            }
            sum += *v;
        }
        for v in values.iter_mut() {
            *v /= sum;
        }
    }
}

impl GtmTtModel {
    /// Validate and assemble a model from its parts.
    pub fn new(
        grid: LatentGrid,
        basis: BasisSet,
        gtm: GtmParams,
        pi: DVector<f64>,
        a: DMatrix<f64>,
    ) -> Result<Self> {
        let k = grid.len();
        if gtm.phi.nrows() != k || gtm.phi.ncols() != basis.n_outputs() {
            return Err(Error::Data(format!(
                "phi shape {:?} does not match grid ({k}) and basis ({})",
                gtm.phi.shape(),
                basis.n_outputs()
            )));
        }
        if !(gtm.beta > 0.0) {
            return Err(Error::Data(format!("beta must be positive, got {}", gtm.beta)));
        }
        if pi.len() != k || (pi.sum() - 1.0).abs() > 1e-6 || pi.iter().any(|&p| p < 0.0) {
            return Err(Error::Data("initial state probabilities are not a distribution".into()));
        }
        if a.nrows() != k || a.ncols() != k {
            return Err(Error::Data(format!("transition matrix {:?} for {k} states", a.shape())));
        }
        for (i, row) in a.row_iter().enumerate() {
            if (row.sum() - 1.0).abs() > 1e-6 || row.iter().any(|&p| p < 0.0) {
                return Err(Error::Data(format!("transition row {i} is not a distribution")));
            }
        }
        Ok(Self { grid, basis, gtm, pi, a })
    }

    /// Standard initialization: PCA-based mapping, uniform initial state
    /// probabilities, topology-based transitions.
    pub fn init(grid: LatentGrid, basis: BasisSet, x_flat: &DMatrix<f64>) -> Result<Self> {
        let gtm = gtm::init_from_pca(x_flat, &grid, &basis)?;
        let k = grid.len();
        let pi = DVector::from_element(k, 1.0 / k as f64);
        let a = topology_transition_init(&grid);
        GtmTtModel::new(grid, basis, gtm, pi, a)
    }

    /// Number of hidden states.
    pub fn k(&self) -> usize {
        self.grid.len()
    }

    /// Data dimensionality.
    pub fn dim(&self) -> usize {
        self.gtm.weights.ncols()
    }

    /// Prototype matrix `Y = Phi W`, `K x D`.
    pub fn prototypes(&self) -> DMatrix<f64> {
        &self.gtm.phi * &self.gtm.weights
    }

    fn log_emissions(&self, x_seq: &DMatrix<f64>, metric: &MetricParams) -> Result<DMatrix<f64>> {
        let protos = self.prototypes();
        log_emission_table(x_seq, &protos, self.gtm.beta, metric)
    }

    /// Scaled forward pass for one sequence.
    pub fn forward(&self, x_seq: &DMatrix<f64>, metric: &MetricParams) -> Result<ScaledForward> {
        forward_scaled(&self.pi, &self.a, &self.log_emissions(x_seq, metric)?)
    }

    /// Scaled backward pass matching a forward pass of the same sequence.
    pub fn backward(
        &self,
        x_seq: &DMatrix<f64>,
        metric: &MetricParams,
        fwd: &ScaledForward,
    ) -> Result<DMatrix<f64>> {
        backward_scaled(&self.a, &self.log_emissions(x_seq, metric)?, fwd)
    }

    /// Responsibilities and accumulated statistics for one sequence.
    pub fn responsibilities(
        &self,
        x_seq: &DMatrix<f64>,
        metric: &MetricParams,
    ) -> Result<ForwardBackwardResult> {
        forward_backward(&self.pi, &self.a, &self.log_emissions(x_seq, metric)?)
    }

    /// Sequence log-likelihood `ln p(X | Theta)`.
    pub fn loglik(&self, x_seq: &DMatrix<f64>, metric: &MetricParams) -> Result<f64> {
        Ok(self.forward(x_seq, metric)?.loglik)
    }

    /// Most probable state path for one sequence (0-based state indices).
    pub fn viterbi(&self, x_seq: &DMatrix<f64>, metric: &MetricParams) -> Result<Vec<usize>> {
        Ok(viterbi_from_log(&self.pi, &self.a, &self.log_emissions(x_seq, metric)?))
    }
}

/// One EM step over a set of sequences: E-step responsibilities, M-step
/// updates of the initial distribution, the transitions and the mapping
/// weights. The inverse variance is deliberately left untouched so the
/// supervised outer loop can link it across class models; see
/// [`optimize_beta`].
///
/// Returns the updated model and the total log-likelihood of the sequences
/// under the model *before* the update.
pub fn em_step(
    model: &GtmTtModel,
    sequences: &[DMatrix<f64>],
    metric: &MetricParams,
) -> Result<(GtmTtModel, f64)> {
    if sequences.is_empty() {
        return Err(Error::Data("EM step over an empty set of sequences".into()));
    }
    let k = model.k();
    let d = model.dim();

    let fbs: Vec<ForwardBackwardResult> = sequences
        .par_iter()
        .map(|x| model.responsibilities(x, metric))
        .collect::<Result<Vec<_>>>()?;

    let mut total_loglik = 0.0;
    let mut pi_acc = DVector::zeros(k);
    let mut xi_acc = DMatrix::zeros(k, k);
    let mut g = DVector::zeros(k);
    let mut rx = DMatrix::zeros(k, d);
    for (fb, x) in fbs.iter().zip(sequences.iter()) {
        total_loglik += fb.loglik;
        pi_acc += fb.resp.row(0).transpose();
        xi_acc += &fb.xi_sum;
        g += fb.resp.row_sum().transpose();
        rx += fb.resp.transpose() * x;
    }

    let mut pi_new = pi_acc / sequences.len() as f64;
    floor_and_renormalize(pi_new.as_mut_slice());

    let mut a_new = DMatrix::zeros(k, k);
    for i in 0..k {
        let row_sum: f64 = xi_acc.row(i).sum();
        if row_sum > 0.0 {
            for j in 0..k {
                a_new[(i, j)] = xi_acc[(i, j)] / row_sum;
            }
        } else {
            // state never left: keep an uninformative row
            for j in 0..k {
                a_new[(i, j)] = 1.0 / k as f64;
            }
        }
        let mut row: Vec<f64> = (0..k).map(|j| a_new[(i, j)]).collect();
        floor_and_renormalize(&mut row);
        for j in 0..k {
            a_new[(i, j)] = row[j];
        }
    }

    let weights = gtm::solve_weights_from_stats(&model.gtm.phi, &g, &rx)?;

    let updated = GtmTtModel {
        grid: model.grid.clone(),
        basis: model.basis.clone(),
        gtm: GtmParams {
            phi: model.gtm.phi.clone(),
            weights,
            beta: model.gtm.beta,
        },
        pi: pi_new,
        a: a_new,
    };
    Ok((updated, total_loglik))
}

/// Inverse-variance candidate from fresh responsibilities pooled over all
/// sequences and time points. The model is not mutated; the supervised loop
/// links the candidates across class models before applying them.
pub fn optimize_beta(
    model: &GtmTtModel,
    sequences: &[DMatrix<f64>],
    metric: &MetricParams,
) -> Result<f64> {
    if sequences.is_empty() {
        return Err(Error::Data("variance update over an empty set of sequences".into()));
    }
    let protos = model.prototypes();
    let d = model.dim();
    let per_seq: Vec<(f64, usize)> = sequences
        .par_iter()
        .map(|x| -> Result<(f64, usize)> {
            let fb = model.responsibilities(x, metric)?;
            let (t_len, k) = fb.resp.shape();
            let mut acc = 0.0;
            for t in 0..t_len {
                for s in 0..k {
                    acc += fb.resp[(t, s)] * metric.squared_row_distance(x, t, &protos, s);
                }
            }
            Ok((acc, t_len))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut total = 0.0;
    let mut n_points = 0usize;
    for (acc, t_len) in per_seq {
        total += acc;
        n_points += t_len;
    }
    let inv_beta = total / (n_points as f64 * d as f64);
    if !inv_beta.is_finite() {
        return Err(Error::Numerical("non-finite variance update".into()));
    }
    if inv_beta <= 1.0 / BETA_MAX {
        Ok(BETA_MAX)
    } else {
        Ok(1.0 / inv_beta)
    }
}

/// Convenience: phi for a grid/basis pair (re-exported shape used by model
/// deserialization).
pub fn phi_for(grid: &LatentGrid, basis: &BasisSet) -> DMatrix<f64> {
    compute_phi(grid, basis)
}

/// Prototype matrix of arbitrary parameters (kept close to the model for
/// callers that hold the pieces separately).
pub fn prototypes_of(gtm_params: &GtmParams) -> Result<DMatrix<f64>> {
    map_prototypes(gtm_params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gtm::{init_from_pca, update_beta};
    use crate::util::logsumexp;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    // -- brute-force oracles ----------------------------------------------------

    /// Log-likelihood by exhaustive enumeration of all K^T state paths of
    /// the complete-data likelihood.
    fn brute_force_loglik(pi: &DVector<f64>, a: &DMatrix<f64>, log_emis: &DMatrix<f64>) -> f64 {
        let (t_len, k) = log_emis.shape();
        let n_paths = k.pow(t_len as u32);
        let mut lps = Vec::with_capacity(n_paths);
        for code in 0..n_paths {
            let mut path = Vec::with_capacity(t_len);
            let mut rest = code;
            for _ in 0..t_len {
                path.push(rest % k);
                rest /= k;
            }
            let mut lp = pi[path[0]].ln() + log_emis[(0, path[0])];
            for t in 1..t_len {
                lp += a[(path[t - 1], path[t])].ln() + log_emis[(t, path[t])];
            }
            lps.push(lp);
        }
        crate::util::logsumexp(&lps)
    }

    /// Posterior state marginals by enumeration.
    fn brute_force_resp(pi: &DVector<f64>, a: &DMatrix<f64>, log_emis: &DMatrix<f64>) -> DMatrix<f64> {
        let (t_len, k) = log_emis.shape();
        let total = brute_force_loglik(pi, a, log_emis);
        let mut resp = DMatrix::zeros(t_len, k);
        let n_paths = k.pow(t_len as u32);
        for code in 0..n_paths {
            let mut path = Vec::with_capacity(t_len);
            let mut rest = code;
            for _ in 0..t_len {
                path.push(rest % k);
                rest /= k;
            }
            let mut lp = pi[path[0]].ln() + log_emis[(0, path[0])];
            for t in 1..t_len {
                lp += a[(path[t - 1], path[t])].ln() + log_emis[(t, path[t])];
            }
            let w = (lp - total).exp();
            for (t, &s) in path.iter().enumerate() {
                resp[(t, s)] += w;
            }
        }
        resp
    }

    /// Best path by enumeration, ties toward lexicographically smaller paths.
    fn brute_force_viterbi(pi: &DVector<f64>, a: &DMatrix<f64>, log_emis: &DMatrix<f64>) -> Vec<usize> {
        let (t_len, k) = log_emis.shape();
        let mut best_path = vec![0; t_len];
        let mut best = f64::NEG_INFINITY;
        let n_paths = k.pow(t_len as u32);
        for code in 0..n_paths {
            let mut path = Vec::with_capacity(t_len);
            let mut rest = code;
            for _ in 0..t_len {
                path.push(rest % k);
                rest /= k;
            }
            let mut lp = pi[path[0]].ln() + log_emis[(0, path[0])];
            for t in 1..t_len {
                lp += a[(path[t - 1], path[t])].ln() + log_emis[(t, path[t])];
            }
            // enumeration order visits lexicographically smaller paths first
            // in the reversed digit order; compare strictly to keep the
            // first maximum
            if lp > best + 1e-15 {
                best = lp;
                best_path = path;
            }
        }
        best_path
    }

    fn random_chain(rng: &mut ChaCha8Rng, k: usize) -> (DVector<f64>, DMatrix<f64>) {
        let mut pi = DVector::from_fn(k, |_, _| rng.random::<f64>() + 0.05);
        pi /= pi.sum();
        let mut a = DMatrix::from_fn(k, k, |_, _| rng.random::<f64>() + 0.05);
        for mut row in a.row_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        (pi, a)
    }

    fn random_log_emis(rng: &mut ChaCha8Rng, t_len: usize, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(t_len, k, |_, _| rng.random::<f64>() * 6.0 - 3.0)
    }

    // -- forward ------------------------------------------------------------------

    #[test]
    fn forward_t1_reduces_to_initial_mixture() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (pi, a) = random_chain(&mut rng, 3);
        let log_emis = random_log_emis(&mut rng, 1, 3);
        let fwd = forward_scaled(&pi, &a, &log_emis).unwrap();
        let expect: Vec<f64> = (0..3).map(|s| pi[s].ln() + log_emis[(0, s)]).collect();
        assert_relative_eq!(fwd.loglik, logsumexp(&expect), max_relative = 1e-12);
    }

    #[test]
    fn forward_single_state_sums_emissions() {
        let pi = DVector::from_element(1, 1.0);
        let a = DMatrix::from_element(1, 1, 1.0);
        let log_emis = DMatrix::from_row_slice(4, 1, &[-1.0, -2.5, -0.3, -4.0]);
        let fwd = forward_scaled(&pi, &a, &log_emis).unwrap();
        assert_relative_eq!(fwd.loglik, -7.8, max_relative = 1e-12);
    }

    #[test]
    fn forward_matches_brute_force_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for k in 1..=4usize {
            for t_len in 1..=5usize {
                let (pi, a) = random_chain(&mut rng, k);
                let log_emis = random_log_emis(&mut rng, t_len, k);
                let fwd = forward_scaled(&pi, &a, &log_emis).unwrap();
                let brute = brute_force_loglik(&pi, &a, &log_emis);
                assert_abs_diff_eq!(fwd.loglik, brute, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn forward_survives_extreme_log_densities() {
        // per-step shifts keep +/-1000-scale log densities finite
        let pi = DVector::from_row_slice(&[0.5, 0.5]);
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let log_emis = DMatrix::from_row_slice(3, 2, &[1000.0, 900.0, -1200.0, -1150.0, 800.0, 805.0]);
        let fwd = forward_scaled(&pi, &a, &log_emis).unwrap();
        assert!(fwd.loglik.is_finite());
        let brute = brute_force_loglik(&pi, &a, &log_emis);
        assert_relative_eq!(fwd.loglik, brute, max_relative = 1e-12);
    }

    // -- backward -----------------------------------------------------------------

    #[test]
    fn backward_last_row_is_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (pi, a) = random_chain(&mut rng, 3);
        let log_emis = random_log_emis(&mut rng, 4, 3);
        let fwd = forward_scaled(&pi, &a, &log_emis).unwrap();
        let bwd = backward_scaled(&a, &log_emis, &fwd).unwrap();
        for s in 0..3 {
            assert_eq!(bwd[(3, s)], 1.0);
        }
    }

    #[test]
    fn forward_backward_product_is_constant_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let k = rng.random_range(1..=4usize);
            let t_len = rng.random_range(1..=5usize);
            let (pi, a) = random_chain(&mut rng, k);
            let log_emis = random_log_emis(&mut rng, t_len, k);
            let fwd = forward_scaled(&pi, &a, &log_emis).unwrap();
            let bwd = backward_scaled(&a, &log_emis, &fwd).unwrap();
            for t in 0..t_len {
                let s: f64 = (0..k).map(|j| fwd.alpha_hat[(t, j)] * bwd[(t, j)]).sum();
                assert_abs_diff_eq!(s, 1.0, epsilon = 1e-8);
            }
        }
    }

    // -- responsibilities ------------------------------------------------------------

    #[test]
    fn responsibilities_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let k = rng.random_range(2..=4usize);
            let t_len = rng.random_range(2..=5usize);
            let (pi, a) = random_chain(&mut rng, k);
            let log_emis = random_log_emis(&mut rng, t_len, k);
            let fb = forward_backward(&pi, &a, &log_emis).unwrap();
            let brute = brute_force_resp(&pi, &a, &log_emis);
            for t in 0..t_len {
                for s in 0..k {
                    assert_abs_diff_eq!(fb.resp[(t, s)], brute[(t, s)], epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn uniform_emissions_yield_chain_marginals() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (pi, a) = random_chain(&mut rng, 3);
        // identical emissions cancel in the posterior
        let log_emis = DMatrix::from_element(4, 3, -1.3);
        let fb = forward_backward(&pi, &a, &log_emis).unwrap();
        let mut marginal = pi.clone();
        for t in 0..4 {
            for s in 0..3 {
                assert_abs_diff_eq!(fb.resp[(t, s)], marginal[s], epsilon = 1e-10);
            }
            marginal = a.transpose() * marginal;
        }
    }

    #[test]
    fn single_state_responsibility_is_one() {
        let pi = DVector::from_element(1, 1.0);
        let a = DMatrix::from_element(1, 1, 1.0);
        let log_emis = DMatrix::from_row_slice(3, 1, &[-1.0, -2.0, -3.0]);
        let fb = forward_backward(&pi, &a, &log_emis).unwrap();
        assert!(fb.resp.iter().all(|&r| (r - 1.0).abs() < 1e-12));
    }

    #[test]
    fn responsibilities_invariant_under_per_step_emission_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (pi, a) = random_chain(&mut rng, 3);
        let log_emis = random_log_emis(&mut rng, 4, 3);
        let fb1 = forward_backward(&pi, &a, &log_emis).unwrap();
        let mut scaled = log_emis.clone();
        for s in 0..3 {
            scaled[(2, s)] += 7.3; // multiply step 2 emissions by e^{7.3}
        }
        let fb2 = forward_backward(&pi, &a, &scaled).unwrap();
        for t in 0..4 {
            for s in 0..3 {
                assert_abs_diff_eq!(fb1.resp[(t, s)], fb2.resp[(t, s)], epsilon = 1e-10);
            }
        }
        // and the log-likelihood shifts by exactly the scaling constant
        assert_relative_eq!(fb2.loglik, fb1.loglik + 7.3, max_relative = 1e-12);
    }

    #[test]
    fn xi_rows_are_consistent_with_responsibilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (pi, a) = random_chain(&mut rng, 3);
        let log_emis = random_log_emis(&mut rng, 2, 3);
        let fb = forward_backward(&pi, &a, &log_emis).unwrap();
        // with T=2 the accumulated xi has a single term and its row sums
        // must equal the step-0 responsibilities
        for i in 0..3 {
            let row: f64 = fb.xi_sum.row(i).sum();
            assert_abs_diff_eq!(row, fb.resp[(0, i)], epsilon = 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn responsibility_rows_sum_to_one(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = rng.random_range(1..=5usize);
            let t_len = rng.random_range(1..=6usize);
            let (pi, a) = random_chain(&mut rng, k);
            let log_emis = random_log_emis(&mut rng, t_len, k);
            let fb = forward_backward(&pi, &a, &log_emis).unwrap();
            for t in 0..t_len {
                let s: f64 = (0..k).map(|j| fb.resp[(t, j)]).sum();
                prop_assert!((s - 1.0).abs() < 1e-10);
            }
        }
    }

    // -- viterbi -----------------------------------------------------------------

    #[test]
    fn viterbi_single_state() {
        let pi = DVector::from_element(1, 1.0);
        let a = DMatrix::from_element(1, 1, 1.0);
        let log_emis = DMatrix::from_row_slice(3, 1, &[-1.0, -2.0, -3.0]);
        assert_eq!(viterbi_from_log(&pi, &a, &log_emis), vec![0, 0, 0]);
    }

    #[test]
    fn viterbi_follows_deterministic_permutation() {
        // cyclic permutation 0 -> 1 -> 2 -> 0 with sharp start
        let pi = DVector::from_row_slice(&[1.0, 0.0, 0.0]);
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0],
        );
        let log_emis = DMatrix::from_element(5, 3, -1.0);
        assert_eq!(viterbi_from_log(&pi, &a, &log_emis), vec![0, 1, 2, 0, 1]);
    }

    #[test]
    fn viterbi_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let k = rng.random_range(2..=3usize);
            let t_len = rng.random_range(2..=5usize);
            let (pi, a) = random_chain(&mut rng, k);
            let log_emis = random_log_emis(&mut rng, t_len, k);
            let fast = viterbi_from_log(&pi, &a, &log_emis);
            let brute = brute_force_viterbi(&pi, &a, &log_emis);
            let lp = |path: &[usize]| {
                let mut v = pi[path[0]].ln() + log_emis[(0, path[0])];
                for t in 1..t_len {
                    v += a[(path[t - 1], path[t])].ln() + log_emis[(t, path[t])];
                }
                v
            };
            assert_abs_diff_eq!(lp(&fast), lp(&brute), epsilon = 1e-10);
        }
    }

    #[test]
    fn viterbi_beats_random_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (pi, a) = random_chain(&mut rng, 4);
        let log_emis = random_log_emis(&mut rng, 6, 4);
        let path = viterbi_from_log(&pi, &a, &log_emis);
        let lp = |path: &[usize]| {
            let mut v = pi[path[0]].ln() + log_emis[(0, path[0])];
            for t in 1..6 {
                v += a[(path[t - 1], path[t])].ln() + log_emis[(t, path[t])];
            }
            v
        };
        let best = lp(&path);
        for _ in 0..100 {
            let random: Vec<usize> = (0..6).map(|_| rng.random_range(0..4)).collect();
            assert!(lp(&random) <= best + 1e-12);
        }
    }

    // -- model-level EM -------------------------------------------------------------

    fn tiny_model(d: usize, seed: u64) -> (GtmTtModel, Vec<DMatrix<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sequences: Vec<DMatrix<f64>> = (0..6)
            .map(|_| DMatrix::from_fn(5, d, |_, _| rng.random::<f64>() * 2.0 - 1.0))
            .collect();
        let mut flat = DMatrix::zeros(30, d);
        for (i, s) in sequences.iter().enumerate() {
            for t in 0..5 {
                for di in 0..d {
                    flat[(i * 5 + t, di)] = s[(t, di)];
                }
            }
        }
        let grid = LatentGrid::build(2, 2).unwrap();
        let basis = BasisSet::regular(2, 2).unwrap();
        let model = GtmTtModel::init(grid, basis, &flat).unwrap();
        (model, sequences)
    }

    #[test]
    fn em_step_single_state_degenerates() {
        // K = 1 chain built by hand; grid constructors require K >= 2 so
        // the degenerate case wires the pieces directly
        let grid = LatentGrid {
            rows: 1,
            cols: 1,
            points: vec![[0.0, 0.0]],
        };
        let basis = BasisSet {
            rows: 1,
            cols: 1,
            centers: vec![[0.0, 0.0]],
            width: 1.0,
            includes_bias: false,
        };
        let gtm = GtmParams {
            phi: DMatrix::identity(1, 1),
            weights: DMatrix::zeros(1, 2),
            beta: 1.0,
        };
        let model = GtmTtModel {
            grid,
            basis,
            gtm,
            pi: DVector::from_element(1, 1.0),
            a: DMatrix::from_element(1, 1, 1.0),
        };
        let seq = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, 3.0, 2.0]);
        let metric = MetricParams::euclidean(2);
        let (updated, _) = em_step(&model, &[seq.clone()], &metric).unwrap();
        assert_abs_diff_eq!(updated.pi[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(updated.a[(0, 0)], 1.0, epsilon = 1e-15);
        // with phi = I and all responsibility on the single state the weight
        // solve is the plain mean of the sequence
        assert_relative_eq!(updated.gtm.weights[(0, 0)], 2.0, max_relative = 1e-9);
        assert_relative_eq!(updated.gtm.weights[(0, 1)], 1.0, max_relative = 1e-9);
    }

    #[test]
    fn em_step_is_monotone_with_fixed_beta() {
        let (mut model, sequences) = tiny_model(3, 31);
        let metric = MetricParams::uniform_diagonal(3);
        let mut last = f64::NEG_INFINITY;
        for _ in 0..50 {
            let (next, ll) = em_step(&model, &sequences, &metric).unwrap();
            assert!(ll >= last - 1e-8, "loglik decreased: {last} -> {ll}");
            last = ll;
            model = next;
        }
    }

    #[test]
    fn em_step_keeps_rows_stochastic() {
        let (model, sequences) = tiny_model(2, 32);
        let metric = MetricParams::uniform_diagonal(2);
        let (updated, _) = em_step(&model, &sequences, &metric).unwrap();
        assert_abs_diff_eq!(updated.pi.sum(), 1.0, epsilon = 1e-12);
        for row in updated.a.row_iter() {
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn em_step_rejects_empty_subset() {
        let (model, _) = tiny_model(2, 33);
        let metric = MetricParams::uniform_diagonal(2);
        assert!(em_step(&model, &[], &metric).is_err());
    }

    // -- beta candidate ---------------------------------------------------------------

    #[test]
    fn optimize_beta_reduces_to_static_update_on_t1() {
        let (model, _) = tiny_model(3, 34);
        let metric = MetricParams::uniform_diagonal(3);
        let x = DMatrix::from_row_slice(1, 3, &[0.4, -0.2, 0.9]);
        // uniform pi means the T=1 chain posterior equals the static one
        let beta_tt = optimize_beta(&model, &[x.clone()], &metric).unwrap();
        let resp = crate::gtm::gtm_responsibilities(&x, &model.gtm, &metric).unwrap();
        let beta_static =
            update_beta(&model.gtm.phi, &model.gtm.weights, &resp, &x, &metric).unwrap();
        assert_relative_eq!(beta_tt, beta_static, max_relative = 1e-10);
    }

    #[test]
    fn optimize_beta_pooling_identical_sequences_is_idempotent() {
        let (model, sequences) = tiny_model(2, 35);
        let metric = MetricParams::uniform_diagonal(2);
        let one = optimize_beta(&model, &sequences[..1], &metric).unwrap();
        let doubled =
            optimize_beta(&model, &[sequences[0].clone(), sequences[0].clone()], &metric).unwrap();
        assert_relative_eq!(one, doubled, max_relative = 1e-12);
    }

    #[test]
    fn optimize_beta_matches_hand_computation() {
        // 2-state, 2-step chain: responsibilities from enumeration, pooled
        // variance update evaluated by hand
        let grid = LatentGrid::build(1, 2).unwrap();
        let basis = BasisSet {
            rows: 1,
            cols: 1,
            centers: vec![[0.0, 0.0]],
            width: 1.0,
            includes_bias: true,
        };
        let phi = compute_phi(&grid, &basis);
        let weights = DMatrix::from_row_slice(2, 1, &[1.0, -0.5]);
        let gtm_params = GtmParams {
            phi,
            weights,
            beta: 2.0,
        };
        let pi = DVector::from_row_slice(&[0.7, 0.3]);
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.4, 0.6]);
        let model = GtmTtModel::new(grid, basis, gtm_params, pi.clone(), a.clone()).unwrap();
        let metric = MetricParams::euclidean(1);
        let x = DMatrix::from_row_slice(2, 1, &[0.3, -0.1]);

        let log_emis = log_emission_table(&x, &model.prototypes(), 2.0, &metric).unwrap();
        let resp = brute_force_resp(&pi, &a, &log_emis);
        let protos = model.prototypes();
        let mut expected_inv = 0.0;
        for t in 0..2 {
            for s in 0..2 {
                let diff = x[(t, 0)] - protos[(s, 0)];
                expected_inv += resp[(t, s)] * diff * diff;
            }
        }
        expected_inv /= 2.0; // T * D = 2 * 1
        let beta = optimize_beta(&model, &[x], &metric).unwrap();
        assert_relative_eq!(beta, 1.0 / expected_inv, max_relative = 1e-10);
    }

    // -- initialization -----------------------------------------------------------------

    #[test]
    fn topology_init_prefers_nearby_states() {
        let grid = LatentGrid::build(3, 3).unwrap();
        let a = topology_transition_init(&grid);
        for row in a.row_iter() {
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-12);
        }
        // from the corner state, staying put beats the adjacent state,
        // which beats the opposite corner
        assert!(a[(0, 0)] > a[(0, 1)]);
        assert!(a[(0, 1)] > a[(0, 8)]);
    }

    #[test]
    fn init_builds_valid_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let x = DMatrix::from_fn(50, 4, |_, _| rng.random::<f64>());
        let grid = LatentGrid::build(3, 3).unwrap();
        let basis = BasisSet::regular(2, 2).unwrap();
        let model = GtmTtModel::init(grid, basis, &x).unwrap();
        assert_eq!(model.k(), 9);
        assert_eq!(model.dim(), 4);
        assert_abs_diff_eq!(model.pi.sum(), 1.0, epsilon = 1e-12);
        assert!(model.gtm.beta > 0.0);
        // sanity: init matches what init_from_pca yields directly
        let params = init_from_pca(&x, &model.grid, &model.basis).unwrap();
        assert_eq!(model.gtm.weights, params.weights);
    }
}

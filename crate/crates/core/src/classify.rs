//! Classification: per-class likelihood features, the likelihood inner-
//! product kernel and a small SMO solver for the soft-margin SVM stage.
//!
//! Raw sequence likelihoods underflow for long or high-dimensional
//! sequences, so the kernel operates on per-time-step normalized, max-
//! shifted values `lik_l = exp(loglik_l / T - max_l loglik_l / T)`, which
//! lie in `(0, 1]` and preserve within-sequence likelihood ratios.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sgtm::SgtmModel;

/// Solver tolerance on the maximal KKT violation.
pub const SVM_TOL: f64 = 1e-3;

/// Gram matrices from the likelihood kernel are explicit inner products;
/// anything below this eigenvalue bound indicates a broken kernel.
const GRAM_EIG_FLOOR: f64 = -1e-8;

/// Per-sequence likelihood features: one entry per class model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodFeatures {
    /// Normalized, shifted likelihood values in `(0, 1]`; the best model
    /// always maps to 1.
    pub lik: Vec<f64>,
    /// Untransformed `ln p(X | Theta_l)` values.
    pub loglik_raw: Vec<f64>,
}

/// Compute likelihood features of a raw (unnormalized) sequence under every
/// class model.
pub fn likelihood_features(model: &SgtmModel, x_raw: &DMatrix<f64>) -> Result<LikelihoodFeatures> {
    let x = model.normalize_sequence(x_raw)?;
    let t_len = x.nrows() as f64;
    let mut loglik_raw = Vec::with_capacity(model.n_labels());
    for submodel in &model.submodels {
        loglik_raw.push(submodel.loglik(&x, &model.metric)?);
    }
    let per_step: Vec<f64> = loglik_raw.iter().map(|l| l / t_len).collect();
    let max = per_step.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lik: Vec<f64> = per_step.iter().map(|v| (v - max).exp()).collect();
    if lik.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite likelihood feature".into()));
    }
    Ok(LikelihoodFeatures { lik, loglik_raw })
}

/// Maximum-likelihood label: argmax of the class log-likelihoods, ties
/// resolved toward the earlier label.
pub fn classify_ml(model: &SgtmModel, x_raw: &DMatrix<f64>) -> Result<String> {
    let features = likelihood_features(model, x_raw)?;
    Ok(argmax_label(&model.label_set, &features.loglik_raw).to_string())
}

/// First label attaining the maximal value.
pub fn argmax_label<'a>(label_set: &'a [String], values: &[f64]) -> &'a str {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] > values[best] {
            best = i;
        }
    }
    &label_set[best]
}

/// Likelihood kernel: plain inner product of the per-class likelihood
/// vectors.
pub fn likelihood_kernel(a: &LikelihoodFeatures, b: &LikelihoodFeatures) -> Result<f64> {
    if a.lik.len() != b.lik.len() {
        return Err(Error::Data(format!(
            "kernel over feature vectors of different lengths ({} vs {})",
            a.lik.len(),
            b.lik.len()
        )));
    }
    Ok(a.lik.iter().zip(b.lik.iter()).map(|(x, y)| x * y).sum())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// A trained binary soft-margin machine over likelihood features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// `alpha_i * y_i` for every retained support vector.
    pub support_coefficients: Vec<f64>,
    pub bias: f64,
    /// Likelihood vectors of the support vectors.
    pub support_features: Vec<Vec<f64>>,
    pub c_param: f64,
    /// Maximal KKT violation at termination.
    pub kkt_residual: f64,
}

impl SvmModel {
    /// Decision value `sum_i coef_i K(sv_i, f) + b`.
    pub fn decision(&self, f: &LikelihoodFeatures) -> f64 {
        self.support_coefficients
            .iter()
            .zip(self.support_features.iter())
            .map(|(c, sv)| c * dot(sv, &f.lik))
            .sum::<f64>()
            + self.bias
    }
}

/// Train a binary SVM on precomputed likelihood features by sequential
/// pairwise optimization of the soft-margin dual. Labels must be +/-1.
pub fn svm_train(features: &[LikelihoodFeatures], y: &[f64], c_param: f64) -> Result<SvmModel> {
    svm_train_with_tol(features, y, c_param, SVM_TOL)
}

pub fn svm_train_with_tol(
    features: &[LikelihoodFeatures],
    y: &[f64],
    c_param: f64,
    tol: f64,
) -> Result<SvmModel> {
    let n = features.len();
    if n < 2 || y.len() != n {
        return Err(Error::Data("SVM training needs at least two labeled samples".into()));
    }
    if !(c_param > 0.0) {
        return Err(Error::Config(format!("box constraint must be positive, got {c_param}")));
    }
    for &label in y {
        if label != 1.0 && label != -1.0 {
            return Err(Error::Data(format!("SVM labels must be +/-1, got {label}")));
        }
    }
    if !y.iter().any(|&l| l == 1.0) || !y.iter().any(|&l| l == -1.0) {
        return Err(Error::Data("SVM training needs both classes present".into()));
    }

    // Gram matrix and PSD sanity check
    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let k = likelihood_kernel(&features[i], &features[j])?;
            gram[(i, j)] = k;
            gram[(j, i)] = k;
        }
    }
    let min_eig = gram
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig < GRAM_EIG_FLOOR {
        return Err(Error::Numerical(format!(
            "likelihood Gram matrix is not positive semi-definite (min eigenvalue {min_eig})"
        )));
    }

    // q[i][j] = y_i y_j K_ij; gradient of 1/2 a'Qa - e'a
    let q = |i: usize, j: usize| y[i] * y[j] * gram[(i, j)];
    let mut alpha = vec![0.0f64; n];
    let mut grad = vec![-1.0f64; n];
    let tau = 1e-12;
    let max_iter = 10_000 * n.max(10);
    let mut kkt = f64::INFINITY;

    for _ in 0..max_iter {
        // working-set selection: maximal violating pair
        let mut i_up = None;
        let mut m_up = f64::NEG_INFINITY;
        let mut j_low = None;
        let mut m_low = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let in_up = (y[t] > 0.0 && alpha[t] < c_param) || (y[t] < 0.0 && alpha[t] > 0.0);
            let in_low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c_param);
            if in_up && v > m_up {
                m_up = v;
                i_up = Some(t);
            }
            if in_low && v < m_low {
                m_low = v;
                j_low = Some(t);
            }
        }
        let (i, j) = match (i_up, j_low) {
            (Some(i), Some(j)) => (i, j),
            _ => break,
        };
        kkt = m_up - m_low;
        if kkt <= tol {
            break;
        }

        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = tau;
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
                if alpha[i] > c_param {
                    alpha[i] = c_param;
                    alpha[j] = c_param - diff;
                }
            } else {
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if alpha[j] > c_param {
                    alpha[j] = c_param;
                    alpha[i] = c_param + diff;
                }
            }
        } else {
            let mut quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = tau;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c_param {
                if alpha[i] > c_param {
                    alpha[i] = c_param;
                    alpha[j] = sum - c_param;
                }
                if alpha[j] > c_param {
                    alpha[j] = c_param;
                    alpha[i] = sum - c_param;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }
        let dai = alpha[i] - old_ai;
        let daj = alpha[j] - old_aj;
        if dai == 0.0 && daj == 0.0 {
            break;
        }
        for t in 0..n {
            grad[t] += q(t, i) * dai + q(t, j) * daj;
        }
    }
    if kkt > tol && kkt.is_finite() {
        return Err(Error::Numerical(format!(
            "SMO did not reach the requested tolerance (residual {kkt})"
        )));
    }

    // bias from the free support vectors, falling back to the violation
    // interval midpoint
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    let mut m_up = f64::NEG_INFINITY;
    let mut m_low = f64::INFINITY;
    for t in 0..n {
        let v = -y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c_param {
            free_sum += v;
            free_count += 1;
        }
        let in_up = (y[t] > 0.0 && alpha[t] < c_param) || (y[t] < 0.0 && alpha[t] > 0.0);
        let in_low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c_param);
        if in_up {
            m_up = m_up.max(v);
        }
        if in_low {
            m_low = m_low.min(v);
        }
    }
    let bias = if free_count > 0 {
        free_sum / free_count as f64
    } else {
        0.5 * (m_up + m_low)
    };
    let kkt_residual = (m_up - m_low).max(0.0);

    let mut support_coefficients = Vec::new();
    let mut support_features = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support_coefficients.push(alpha[t] * y[t]);
            support_features.push(features[t].lik.clone());
        }
    }
    Ok(SvmModel {
        support_coefficients,
        bias,
        support_features,
        c_param,
        kkt_residual,
    })
}

/// Label-aware SVM stage: a single machine for two classes, one-vs-rest
/// machines otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmClassifier {
    pub label_set: Vec<String>,
    /// One machine for two labels (+1 = first label); one machine per label
    /// (+1 = that label) for multi-class.
    pub machines: Vec<SvmModel>,
}

impl SvmClassifier {
    /// Fit over precomputed features and string labels.
    pub fn train(
        features: &[LikelihoodFeatures],
        labels: &[String],
        label_set: &[String],
        c_param: f64,
    ) -> Result<Self> {
        if label_set.len() < 2 {
            return Err(Error::Data("SVM stage needs at least two labels".into()));
        }
        if labels.len() != features.len() {
            return Err(Error::Data("labels do not align with the features".into()));
        }
        let machines = if label_set.len() == 2 {
            let y: Vec<f64> = labels
                .iter()
                .map(|l| if *l == label_set[0] { 1.0 } else { -1.0 })
                .collect();
            vec![svm_train(features, &y, c_param)?]
        } else {
            label_set
                .iter()
                .map(|positive| {
                    let y: Vec<f64> = labels
                        .iter()
                        .map(|l| if l == positive { 1.0 } else { -1.0 })
                        .collect();
                    svm_train(features, &y, c_param)
                })
                .collect::<Result<Vec<_>>>()?
        };
        Ok(Self {
            label_set: label_set.to_vec(),
            machines,
        })
    }

    /// Predicted label and its decision value. A two-class decision of
    /// exactly zero maps to the first label.
    pub fn predict(&self, f: &LikelihoodFeatures) -> Result<(String, f64)> {
        if self.machines.is_empty() {
            return Err(Error::Data("empty SVM classifier".into()));
        }
        if self.label_set.len() == 2 {
            let d = self.machines[0].decision(f);
            let label = if d >= 0.0 {
                self.label_set[0].clone()
            } else {
                self.label_set[1].clone()
            };
            Ok((label, d))
        } else {
            let decisions: Vec<f64> = self.machines.iter().map(|m| m.decision(f)).collect();
            let label = argmax_label(&self.label_set, &decisions).to_string();
            let best = decisions.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            Ok((label, best))
        }
    }
}

/// Fit the SVM stage of a trained model on (raw) training sequences.
pub fn fit_svm(model: &SgtmModel, data: &crate::data::SequenceDataset) -> Result<SvmClassifier> {
    let features: Vec<LikelihoodFeatures> = data
        .sequences
        .iter()
        .map(|seq| likelihood_features(model, seq))
        .collect::<Result<Vec<_>>>()?;
    SvmClassifier::train(&features, &data.labels, &model.label_set, model.config.svm_c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{simulate, SimulateConfig};
    use crate::sgtm::{train, TrainConfig};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn feats(lik: &[f64]) -> LikelihoodFeatures {
        LikelihoodFeatures {
            lik: lik.to_vec(),
            loglik_raw: lik.iter().map(|v| v.ln()).collect(),
        }
    }

    fn tiny_model() -> crate::sgtm::SgtmModel {
        let data = simulate(&SimulateConfig::new(8, 5, 4, 2, 303)).unwrap();
        let config = TrainConfig {
            grid_rows: 2,
            grid_cols: 2,
            max_epochs: 15,
            relevance: false,
            ..TrainConfig::default()
        };
        train(&data, &config).unwrap()
    }

    // -- likelihood features -----------------------------------------------------

    #[test]
    fn identical_submodels_yield_unit_features() {
        let mut model = tiny_model();
        model.submodels[1] = model.submodels[0].clone();
        let x = DMatrix::from_fn(5, 4, |t, d| (t + d) as f64 * 0.1);
        let f = likelihood_features(&model, &x).unwrap();
        assert_abs_diff_eq!(f.lik[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.lik[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn best_model_feature_is_one() {
        let model = tiny_model();
        let x = DMatrix::from_fn(5, 4, |t, d| (t as f64 - d as f64) * 0.2);
        let f = likelihood_features(&model, &x).unwrap();
        let max = f.lik.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_abs_diff_eq!(max, 1.0, epsilon = 1e-12);
        assert!(f.lik.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn held_out_sequences_prefer_their_class() {
        let train_data = simulate(&SimulateConfig::new(12, 6, 5, 2, 71)).unwrap();
        let test_data = simulate(&SimulateConfig::new(10, 6, 5, 2, 71)).unwrap();
        let config = TrainConfig {
            grid_rows: 2,
            grid_cols: 2,
            max_epochs: 25,
            relevance: false,
            ..TrainConfig::default()
        };
        let model = train(&train_data, &config).unwrap();
        let mut correct = 0;
        let mut class0 = 0;
        for (seq, label) in test_data.sequences.iter().zip(test_data.labels.iter()) {
            if label != "0" {
                continue;
            }
            class0 += 1;
            let f = likelihood_features(&model, seq).unwrap();
            if f.lik[0] > f.lik[1] {
                correct += 1;
            }
        }
        assert!(
            correct * 10 >= class0 * 9,
            "only {correct}/{class0} class-0 sequences prefer model 0"
        );
    }

    // -- ML classification -----------------------------------------------------------

    #[test]
    fn argmax_label_picks_largest_and_breaks_ties_forward() {
        let labels = vec!["0".to_string(), "1".to_string()];
        assert_eq!(argmax_label(&labels, &[-10.0, -20.0]), "0");
        assert_eq!(argmax_label(&labels, &[-20.0, -10.0]), "1");
        assert_eq!(argmax_label(&labels, &[-5.0, -5.0]), "0");
    }

    #[test]
    fn ml_and_svm_agree_on_separated_data() {
        let data = simulate(&SimulateConfig::new(12, 6, 5, 2, 91)).unwrap();
        let config = TrainConfig {
            grid_rows: 2,
            grid_cols: 2,
            max_epochs: 20,
            relevance: false,
            ..TrainConfig::default()
        };
        let model = train(&data, &config).unwrap();
        let svm = fit_svm(&model, &data).unwrap();
        let mut agree = 0;
        for seq in &data.sequences {
            let ml = classify_ml(&model, seq).unwrap();
            let f = likelihood_features(&model, seq).unwrap();
            let (sv, _) = svm.predict(&f).unwrap();
            if ml == sv {
                agree += 1;
            }
        }
        assert!(
            agree * 100 >= data.n() * 85,
            "ML and SVM agree on only {agree}/{} sequences",
            data.n()
        );
    }

    // -- kernel -------------------------------------------------------------------

    #[test]
    fn kernel_values() {
        assert_abs_diff_eq!(
            likelihood_kernel(&feats(&[1.0, 0.0]), &feats(&[1.0, 0.0])).unwrap(),
            1.0
        );
        assert_abs_diff_eq!(
            likelihood_kernel(&feats(&[1.0, 0.0]), &feats(&[0.0, 1.0])).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            likelihood_kernel(&feats(&[0.8, 1.0]), &feats(&[1.0, 0.5])).unwrap(),
            1.3,
            epsilon = 1e-12
        );
        assert!(likelihood_kernel(&feats(&[1.0]), &feats(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn gram_matrix_is_positive_semidefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let n = rng.random_range(3..=12usize);
            let features: Vec<LikelihoodFeatures> = (0..n)
                .map(|_| feats(&[rng.random::<f64>(), rng.random::<f64>()]))
                .collect();
            let mut gram = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    gram[(i, j)] = likelihood_kernel(&features[i], &features[j]).unwrap();
                }
            }
            let min_eig = gram
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            assert!(min_eig >= -1e-8, "min eigenvalue {min_eig}");
        }
    }

    // -- SMO ---------------------------------------------------------------------

    fn separable_problem() -> (Vec<LikelihoodFeatures>, Vec<f64>) {
        let mut features = Vec::new();
        let mut y = Vec::new();
        for i in 0..6 {
            let off = i as f64 * 0.02;
            features.push(feats(&[1.0, 0.2 + off]));
            y.push(1.0);
            features.push(feats(&[0.2 + off, 1.0]));
            y.push(-1.0);
        }
        (features, y)
    }

    #[test]
    fn smo_separates_separable_features() {
        let (features, y) = separable_problem();
        let svm = svm_train(&features, &y, 10.0).unwrap();
        for (f, label) in features.iter().zip(y.iter()) {
            let d = svm.decision(f);
            assert!(d * label > 0.0, "decision {d} disagrees with label {label}");
        }
        assert!(svm.kkt_residual <= SVM_TOL);
    }

    #[test]
    fn dual_weights_respect_box_constraint() {
        let (features, y) = separable_problem();
        let c = 0.7;
        let svm = svm_train(&features, &y, c).unwrap();
        for (coef, _) in svm.support_coefficients.iter().zip(svm.support_features.iter()) {
            assert!(coef.abs() <= c + 1e-12, "coefficient {coef} outside box");
        }
    }

    #[test]
    fn decision_matches_independent_reevaluation() {
        let (features, y) = separable_problem();
        let svm = svm_train(&features, &y, 1.0).unwrap();
        let probe = feats(&[0.9, 0.4]);
        let direct: f64 = svm
            .support_coefficients
            .iter()
            .zip(svm.support_features.iter())
            .map(|(c, sv)| c * sv.iter().zip(probe.lik.iter()).map(|(a, b)| a * b).sum::<f64>())
            .sum::<f64>()
            + svm.bias;
        assert_abs_diff_eq!(svm.decision(&probe), direct, epsilon = 1e-12);
    }

    #[test]
    fn training_order_does_not_change_decisions() {
        let (features, y) = separable_problem();
        let svm1 = svm_train_with_tol(&features, &y, 1.0, 1e-6).unwrap();
        let mut reordered: Vec<(LikelihoodFeatures, f64)> =
            features.iter().cloned().zip(y.iter().cloned()).collect();
        reordered.reverse();
        let rf: Vec<LikelihoodFeatures> = reordered.iter().map(|(f, _)| f.clone()).collect();
        let ry: Vec<f64> = reordered.iter().map(|(_, l)| *l).collect();
        let svm2 = svm_train_with_tol(&rf, &ry, 1.0, 1e-6).unwrap();
        for probe in [feats(&[1.0, 0.3]), feats(&[0.3, 1.0]), feats(&[0.7, 0.7])] {
            let d1 = svm1.decision(&probe);
            let d2 = svm2.decision(&probe);
            assert!(
                (d1 - d2).abs() < 1e-3,
                "decisions differ after reordering: {d1} vs {d2}"
            );
        }
    }

    #[test]
    fn svm_rejects_bad_labels() {
        let features = vec![feats(&[1.0, 0.0]), feats(&[0.0, 1.0])];
        assert!(svm_train(&features, &[0.5, -1.0], 1.0).is_err());
        assert!(svm_train(&features, &[1.0, 1.0], 1.0).is_err());
    }

    // -- label mapping --------------------------------------------------------------

    #[test]
    fn zero_decision_maps_to_first_label() {
        let clf = SvmClassifier {
            label_set: vec!["0".to_string(), "1".to_string()],
            machines: vec![SvmModel {
                support_coefficients: vec![],
                bias: 0.0,
                support_features: vec![],
                c_param: 1.0,
                kkt_residual: 0.0,
            }],
        };
        let (label, d) = clf.predict(&feats(&[0.5, 0.5])).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(label, "0");
    }

    #[test]
    fn positive_side_maps_to_first_label() {
        let (features, y) = separable_problem();
        let clf = SvmClassifier {
            label_set: vec!["pos".to_string(), "neg".to_string()],
            machines: vec![svm_train(&features, &y, 1.0).unwrap()],
        };
        let (label, d) = clf.predict(&feats(&[1.0, 0.1])).unwrap();
        assert!(d > 0.0);
        assert_eq!(label, "pos");
        let (label, d) = clf.predict(&feats(&[0.1, 1.0])).unwrap();
        assert!(d < 0.0);
        assert_eq!(label, "neg");
    }

    #[test]
    fn one_vs_rest_covers_three_labels() {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let centers = [[1.0, 0.1, 0.1], [0.1, 1.0, 0.1], [0.1, 0.1, 1.0]];
        for (ci, center) in centers.iter().enumerate() {
            for j in 0..4 {
                let off = j as f64 * 0.01;
                features.push(feats(&[center[0] + off, center[1], center[2]]));
                labels.push(ci.to_string());
            }
        }
        let label_set: Vec<String> = (0..3).map(|i| i.to_string()).collect();
        let clf = SvmClassifier::train(&features, &labels, &label_set, 5.0).unwrap();
        assert_eq!(clf.machines.len(), 3);
        for (f, expected) in features.iter().zip(labels.iter()) {
            let (got, _) = clf.predict(f).unwrap();
            assert_eq!(&got, expected);
        }
    }
}

//! Supervised wrapper: one sequence model per class label on a shared latent
//! grid, a shared adaptive metric and a linked inverse variance.
//!
//! Each training epoch runs one EM step per class model, checks convergence,
//! optionally performs one averaged metric-gradient step (after the warm-up
//! phase), and finally replaces every model's inverse variance by the mean
//! of the per-model candidates so the class-conditional densities stay
//! comparable.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::SvmClassifier;
use crate::data::{impute, normalize, NormalizationParams, SequenceDataset};
use crate::error::{Error, Result};
use crate::gtm::{compute_phi, BasisSet, GtmParams, LatentGrid};
use crate::hmm::{em_step, optimize_beta, GtmTtModel};
use crate::metric::{
    apply_metric_update, metric_gradient_from_profiles, relevance_active, reconstruct,
    time_distance_profile, weighted_distance, MetricDelta, MetricKind, MetricParams, TimeDistance,
};
use crate::util::{mean, MatrixDef};
use crate::FORMAT_VERSION;

/// Which per-dimension time-domain distance feeds the relevance gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeDistanceKind {
    /// Functional norm with triangle terms (default).
    Func,
    /// Plain Euclidean norm over the time course.
    Euclidean,
}

/// Training configuration; the defaults reproduce the reference setting
/// (3x3 grid, 2x2 basis, relevance learning from epoch 11 with a fixed
/// learning rate of 0.1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub basis_rows: usize,
    pub basis_cols: usize,
    pub max_epochs: usize,
    pub tol: f64,
    pub relevance: bool,
    pub metric_kind: MetricKind,
    pub epsilon: f64,
    /// Metric learning starts strictly after this many epochs.
    pub relevance_start_epoch: usize,
    pub func_p: u32,
    pub tau: f64,
    pub svm_c: f64,
    pub seed: u64,
    /// Optional multiplicative decay of the learning rate per relevance
    /// epoch; 1.0 keeps the rate fixed.
    pub epsilon_decay: f64,
    pub time_distance: TimeDistanceKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            grid_rows: 3,
            grid_cols: 3,
            basis_rows: 2,
            basis_cols: 2,
            max_epochs: 200,
            tol: 1e-5,
            relevance: true,
            metric_kind: MetricKind::Diagonal,
            epsilon: 0.1,
            relevance_start_epoch: 10,
            func_p: 2,
            tau: 1.0,
            svm_c: 1.0,
            seed: 42,
            epsilon_decay: 1.0,
            time_distance: TimeDistanceKind::Func,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_rows == 0 || self.grid_cols == 0 || self.grid_rows * self.grid_cols < 2 {
            return Err(Error::Config("latent grid needs at least 2 points".into()));
        }
        if self.basis_rows == 0 || self.basis_cols == 0 {
            return Err(Error::Config("basis grid needs at least one center".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return Err(Error::Config("epsilon_decay must lie in (0, 1]".into()));
        }
        if self.func_p == 0 || !(self.tau > 0.0) {
            return Err(Error::Config("functional distance needs p >= 1 and tau > 0".into()));
        }
        if !(self.svm_c > 0.0) {
            return Err(Error::Config("SVM box constraint must be positive".into()));
        }
        Ok(())
    }

    pub fn time_distance(&self) -> TimeDistance {
        match self.time_distance {
            TimeDistanceKind::Func => TimeDistance::Func {
                tau: self.tau,
                p: self.func_p,
            },
            TimeDistanceKind::Euclidean => TimeDistance::Euclidean,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: TrainConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Pre-update log-likelihood per class model, aligned with the label set.
    pub loglik: Vec<f64>,
    /// Per-model inverse-variance candidates before linking.
    pub beta_candidates: Vec<f64>,
    /// The linked value applied to every model.
    pub shared_beta: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub converged_epoch: Option<usize>,
}

impl TrainingLog {
    /// Log-likelihood trace as epoch-major rows.
    pub fn loglik_trace(&self) -> Vec<Vec<f64>> {
        self.epochs.iter().map(|e| e.loglik.clone()).collect()
    }
}

/// The trained supervised model: one sequence model per label plus shared
/// metric, normalization and (optionally) the fitted SVM stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SgtmModel {
    pub label_set: Vec<String>,
    /// Aligned with `label_set`.
    pub submodels: Vec<GtmTtModel>,
    pub shared_beta: f64,
    pub metric: MetricParams,
    pub norm_params: NormalizationParams,
    pub feature_names: Vec<String>,
    pub config: TrainConfig,
    pub training_log: TrainingLog,
    /// SVM stage over likelihood features, fitted separately after training.
    pub svm: Option<SvmClassifier>,
}

/// Partition a dataset by label (labels sorted). A classification split is
/// refused when only one label is present or any class has fewer than two
/// samples.
pub fn split_by_label(data: &SequenceDataset) -> Result<Vec<(String, SequenceDataset)>> {
    data.validate()?;
    let label_set = data.label_set();
    if label_set.len() < 2 {
        return Err(Error::Data(
            "dataset carries a single label; supervised split is degenerate".into(),
        ));
    }
    let mut out = Vec::with_capacity(label_set.len());
    for label in label_set {
        let indices: Vec<usize> = data
            .labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == label)
            .map(|(i, _)| i)
            .collect();
        if indices.len() < 2 {
            return Err(Error::Data(format!(
                "degenerate class '{label}' with only {} sample",
                indices.len()
            )));
        }
        out.push((label, data.subset(&indices)));
    }
    Ok(out)
}

/// Per-model convergence flags from an epoch-major log-likelihood trace:
/// converged when the relative change between the last two epochs drops
/// below `tol`. With fewer than two epochs nothing is converged.
pub fn convergence_check(loglik_trace: &[Vec<f64>], tol: f64) -> Vec<bool> {
    if loglik_trace.len() < 2 {
        return loglik_trace
            .last()
            .map(|row| vec![false; row.len()])
            .unwrap_or_default();
    }
    let prev = &loglik_trace[loglik_trace.len() - 2];
    let last = &loglik_trace[loglik_trace.len() - 1];
    prev.iter()
        .zip(last.iter())
        .map(|(p, c)| (c - p).abs() / (c.abs() + 1.0) < tol)
        .collect()
}

/// Train a supervised model. Missing values are imputed, the data is
/// normalized (parameters stored in the model), and one sequence model per
/// label is fitted with linked inverse variance and, when enabled, metric
/// relevance learning.
pub fn train(data: &SequenceDataset, config: &TrainConfig) -> Result<SgtmModel> {
    config.validate()?;
    let data = impute(data)?;
    let (normed, norm_params) = normalize(&data)?;

    let label_set = normed.label_set();
    let groups: Vec<(String, SequenceDataset)> = if label_set.len() == 1 {
        // unsupervised degenerate case: a single model trained on everything
        vec![(label_set[0].clone(), normed.clone())]
    } else {
        split_by_label(&normed)?
    };

    let grid = LatentGrid::build(config.grid_rows, config.grid_cols)?;
    let basis = BasisSet::regular(config.basis_rows, config.basis_cols)?;
    let dim = normed.d();
    let mut metric = MetricParams::uniform(config.metric_kind, dim);
    let td = config.time_distance();

    let mut submodels: Vec<GtmTtModel> = groups
        .iter()
        .map(|(_, subset)| GtmTtModel::init(grid.clone(), basis.clone(), &subset.flattened()))
        .collect::<Result<Vec<_>>>()?;
    // link the inverse variance from the start
    let beta0 = mean(&submodels.iter().map(|m| m.gtm.beta).collect::<Vec<_>>());
    for m in submodels.iter_mut() {
        m.gtm.beta = beta0;
    }

    let sequences: Vec<Vec<DMatrix<f64>>> = groups
        .iter()
        .map(|(_, subset)| subset.sequences.clone())
        .collect();
    let n_total: usize = sequences.iter().map(|s| s.len()).sum();

    let mut training_log = TrainingLog::default();
    let mut trace: Vec<Vec<f64>> = Vec::new();
    let mut shared_beta = beta0;

    for epoch in 1..=config.max_epochs {
        let mut logliks = Vec::with_capacity(submodels.len());
        for (gi, model) in submodels.iter_mut().enumerate() {
            let (updated, ll) = em_step(model, &sequences[gi], &metric)?;
            if !ll.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite log-likelihood for class '{}' at epoch {epoch}",
                    groups[gi].0
                )));
            }
            *model = updated;
            logliks.push(ll);
        }
        trace.push(logliks.clone());
        let converged = convergence_check(&trace, config.tol);

        if config.relevance
            && groups.len() > 1
            && relevance_active(epoch, config.relevance_start_epoch)
        {
            let relevance_epochs = epoch - config.relevance_start_epoch - 1;
            let rate = config.epsilon * config.epsilon_decay.powi(relevance_epochs as i32);
            let jobs: Vec<(usize, &DMatrix<f64>)> = sequences
                .iter()
                .enumerate()
                .flat_map(|(gi, seqs)| seqs.iter().map(move |s| (gi, s)))
                .collect();
            let contributions: Vec<MetricDelta> = jobs
                .par_iter()
                .map(|&(gi, x_seq)| -> Result<MetricDelta> {
                    let own = reconstruct(x_seq, &submodels[gi], &metric, &groups[gi].0)?;
                    let dt_plus = time_distance_profile(x_seq, &own.x_hat, &td)?;
                    // closest wrong model
                    let mut best: Option<(f64, DVector<f64>)> = None;
                    for (gj, other_model) in submodels.iter().enumerate() {
                        if gj == gi {
                            continue;
                        }
                        let other = reconstruct(x_seq, other_model, &metric, &groups[gj].0)?;
                        let dt = time_distance_profile(x_seq, &other.x_hat, &td)?;
                        let dist = weighted_distance(&dt, &metric)?;
                        if best.as_ref().is_none_or(|(b, _)| dist < *b) {
                            best = Some((dist, dt));
                        }
                    }
                    let (_, dt_minus) = best.expect("at least two class models");
                    metric_gradient_from_profiles(&dt_plus, &dt_minus, &metric)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut avg = MetricDelta::zeros_like(&metric);
            for c in &contributions {
                avg.add_assign(c)?;
            }
            avg.scale(1.0 / n_total as f64);
            metric = apply_metric_update(&metric, &avg, rate)?;
        }

        let beta_candidates: Vec<f64> = submodels
            .iter()
            .enumerate()
            .map(|(gi, model)| optimize_beta(model, &sequences[gi], &metric))
            .collect::<Result<Vec<_>>>()?;
        shared_beta = mean(&beta_candidates);
        for model in submodels.iter_mut() {
            model.gtm.beta = shared_beta;
        }

        training_log.epochs.push(EpochLog {
            epoch,
            loglik: logliks,
            beta_candidates,
            shared_beta,
        });

        // With relevance enabled, termination is deferred until metric
        // learning has actually run: the EM alone often converges within the
        // warm-up phase, and stopping there would freeze the metric at
        // uniform.
        let relevance_ready = !config.relevance
            || groups.len() == 1
            || relevance_active(epoch, config.relevance_start_epoch);
        if relevance_ready && !converged.is_empty() && converged.iter().all(|&c| c) {
            training_log.converged_epoch = Some(epoch);
            break;
        }
    }

    Ok(SgtmModel {
        label_set: groups.iter().map(|(l, _)| l.clone()).collect(),
        submodels,
        shared_beta,
        metric,
        norm_params,
        feature_names: normed.feature_names.clone(),
        config: config.clone(),
        training_log,
        svm: None,
    })
}

impl SgtmModel {
    pub fn n_labels(&self) -> usize {
        self.label_set.len()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn submodel(&self, label: &str) -> Option<&GtmTtModel> {
        self.label_set
            .iter()
            .position(|l| l == label)
            .map(|i| &self.submodels[i])
    }

    /// Normalize a raw sequence with the stored training parameters.
    pub fn normalize_sequence(&self, x_seq: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.norm_params.apply_to_sequence(x_seq)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&BundleDef::from_model(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bundle: BundleDef = serde_json::from_str(text)?;
        bundle.into_model()
    }

    pub fn save<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_json()?)?;
        Ok(())
    }

    pub fn load<P: AsRef<std::path::Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json(&text)
    }
}

// ---------------------------------------------------------------------------
// Serialized bundle
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SubmodelDef {
    label: String,
    grid: LatentGrid,
    basis: BasisSet,
    #[serde(rename = "W")]
    weights: MatrixDef,
    beta: f64,
    pi: Vec<f64>,
    #[serde(rename = "A")]
    a: MatrixDef,
    /// All submodels share the bundle-level metric.
    metric_ref: String,
}

#[derive(Serialize, Deserialize)]
struct BundleDef {
    version: String,
    label_set: Vec<String>,
    submodels: Vec<SubmodelDef>,
    shared_beta: f64,
    metric: MetricParams,
    norm_params: NormalizationParams,
    feature_names: Vec<String>,
    config: TrainConfig,
    training_log: TrainingLog,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    svm: Option<SvmClassifier>,
}

impl BundleDef {
    fn from_model(model: &SgtmModel) -> Self {
        let submodels = model
            .label_set
            .iter()
            .zip(model.submodels.iter())
            .map(|(label, m)| SubmodelDef {
                label: label.clone(),
                grid: m.grid.clone(),
                basis: m.basis.clone(),
                weights: MatrixDef::from_matrix(&m.gtm.weights),
                beta: m.gtm.beta,
                pi: m.pi.iter().cloned().collect(),
                a: MatrixDef::from_matrix(&m.a),
                metric_ref: "shared".to_string(),
            })
            .collect();
        BundleDef {
            version: FORMAT_VERSION.to_string(),
            label_set: model.label_set.clone(),
            submodels,
            shared_beta: model.shared_beta,
            metric: model.metric.clone(),
            norm_params: model.norm_params.clone(),
            feature_names: model.feature_names.clone(),
            config: model.config.clone(),
            training_log: model.training_log.clone(),
            svm: model.svm.clone(),
        }
    }

    fn into_model(self) -> Result<SgtmModel> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported model version '{}', expected '{FORMAT_VERSION}'",
                self.version
            )));
        }
        if self.submodels.len() != self.label_set.len() {
            return Err(Error::Data(
                "model bundle: submodels do not align with the label set".into(),
            ));
        }
        let mut submodels = Vec::with_capacity(self.submodels.len());
        for (label, def) in self.label_set.iter().zip(self.submodels.into_iter()) {
            if &def.label != label {
                return Err(Error::Data(format!(
                    "model bundle: submodel label '{}' does not match label set entry '{label}'",
                    def.label
                )));
            }
            let phi = compute_phi(&def.grid, &def.basis);
            let gtm = GtmParams {
                phi,
                weights: def.weights.to_matrix()?,
                beta: def.beta,
            };
            let pi = DVector::from_vec(def.pi);
            let a = def.a.to_matrix()?;
            submodels.push(GtmTtModel::new(def.grid, def.basis, gtm, pi, a)?);
        }
        Ok(SgtmModel {
            label_set: self.label_set,
            submodels,
            shared_beta: self.shared_beta,
            metric: self.metric,
            norm_params: self.norm_params,
            feature_names: self.feature_names,
            config: self.config,
            training_log: self.training_log,
            svm: self.svm,
        })
    }
}

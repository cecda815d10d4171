//! Repeated stratified cross-validation, accuracy aggregation and
//! relevance-profile statistics.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{fit_svm, likelihood_features, argmax_label};
use crate::data::{impute, SequenceDataset};
use crate::error::{Error, Result};
use crate::sgtm::{train, TrainConfig};
use crate::util::{mean, pop_std, sample_std};
use crate::FORMAT_VERSION;

/// Componentwise relevance statistics over cross-validation folds, with the
/// selection threshold `zeta = mu + sigma` computed on the mean profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceProfile {
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub std: Vec<f64>,
    pub zeta: f64,
    /// Feature indices whose mean relevance exceeds `zeta`, ascending.
    pub selected: Vec<usize>,
}

/// Aggregate the per-fold relevance vectors.
pub fn relevance_profile(per_fold_relevance: &[Vec<f64>]) -> Result<RelevanceProfile> {
    if per_fold_relevance.is_empty() {
        return Err(Error::Data("relevance profile over zero folds".into()));
    }
    let d = per_fold_relevance[0].len();
    if per_fold_relevance.iter().any(|v| v.len() != d) {
        return Err(Error::Data("per-fold relevance vectors differ in length".into()));
    }
    let mut mean_profile = vec![0.0; d];
    let mut min_profile = vec![f64::INFINITY; d];
    let mut std_profile = vec![0.0; d];
    for di in 0..d {
        let values: Vec<f64> = per_fold_relevance.iter().map(|v| v[di]).collect();
        mean_profile[di] = mean(&values);
        min_profile[di] = values.iter().cloned().fold(f64::INFINITY, f64::min);
        std_profile[di] = pop_std(&values);
    }
    let zeta = mean(&mean_profile) + pop_std(&mean_profile);
    let selected: Vec<usize> = (0..d).filter(|&di| mean_profile[di] > zeta).collect();
    Ok(RelevanceProfile {
        mean: mean_profile,
        min: min_profile,
        std: std_profile,
        zeta,
        selected,
    })
}

/// Accuracy and confusion statistics for one classifier path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierStats {
    /// `repetitions x folds` accuracies.
    pub fold_accuracies: Vec<Vec<f64>>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    /// `label x label` counts, rows = true label, columns = predicted.
    pub confusion: Vec<Vec<usize>>,
}

impl ClassifierStats {
    fn from_folds(fold_accuracies: Vec<Vec<f64>>, confusion: Vec<Vec<usize>>) -> Self {
        let flat: Vec<f64> = fold_accuracies.iter().flatten().cloned().collect();
        Self {
            mean_accuracy: mean(&flat),
            std_accuracy: sample_std(&flat),
            fold_accuracies,
            confusion,
        }
    }
}

/// Full cross-validation report: both classifier paths, the per-fold
/// relevance vectors and their aggregated profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub version: String,
    pub label_set: Vec<String>,
    pub feature_names: Vec<String>,
    pub folds: usize,
    pub reps: usize,
    pub seed: u64,
    pub config: TrainConfig,
    pub svm: ClassifierStats,
    pub ml: ClassifierStats,
    pub per_fold_relevance: Vec<Vec<f64>>,
    pub relevance: RelevanceProfile,
}

impl CvReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_json()?)?;
        Ok(())
    }

    pub fn load<P: AsRef<std::path::Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let report: CvReport = serde_json::from_str(&text)?;
        if report.version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported report version '{}', expected '{FORMAT_VERSION}'",
                report.version
            )));
        }
        Ok(report)
    }

    /// Two-row summary (`classifier,mean_acc,std_acc,n_selected_features`).
    pub fn summary_csv(&self) -> String {
        let n_selected = self.relevance.selected.len();
        format!(
            "classifier,mean_acc,std_acc,n_selected_features\n\
             svm,{},{},{n_selected}\n\
             ml,{},{},{n_selected}\n",
            self.svm.mean_accuracy, self.svm.std_accuracy, self.ml.mean_accuracy, self.ml.std_accuracy
        )
    }
}

/// Seeded stratified fold assignment: per repetition and class, shuffled
/// members are dealt round-robin over the folds, so per-fold class counts
/// differ by at most one sample from proportionality.
pub fn stratified_fold_indices(
    labels: &[String],
    folds: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<Vec<Vec<usize>>>> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    if reps == 0 {
        return Err(Error::Config("need at least 1 repetition".into()));
    }
    let mut label_set: Vec<String> = labels.to_vec();
    label_set.sort();
    label_set.dedup();
    let mut per_class: Vec<Vec<usize>> = Vec::with_capacity(label_set.len());
    for label in &label_set {
        let members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, l)| *l == label)
            .map(|(i, _)| i)
            .collect();
        if members.len() < folds {
            return Err(Error::Data(format!(
                "class '{label}' has {} samples, fewer than {folds} folds",
                members.len()
            )));
        }
        per_class.push(members);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = Vec::with_capacity(reps);
    for _ in 0..reps {
        let mut fold_sets: Vec<Vec<usize>> = vec![Vec::new(); folds];
        for members in &per_class {
            let mut shuffled = members.clone();
            shuffled.shuffle(&mut rng);
            for (pos, &idx) in shuffled.iter().enumerate() {
                fold_sets[pos % folds].push(idx);
            }
        }
        for fold in fold_sets.iter_mut() {
            fold.sort_unstable();
        }
        assignments.push(fold_sets);
    }
    Ok(assignments)
}

struct FoldOutcome {
    svm_accuracy: f64,
    ml_accuracy: f64,
    svm_confusion: Vec<Vec<usize>>,
    ml_confusion: Vec<Vec<usize>>,
    relevance: Vec<f64>,
}

/// Repeated stratified cross-validation: per fold the model (and its SVM
/// stage) is trained on the remaining samples, normalization fitted on the
/// training part only, and both classifier paths are evaluated on the held
/// out fold.
pub fn stratified_cv(
    data: &SequenceDataset,
    config: &TrainConfig,
    folds: usize,
    reps: usize,
    seed: u64,
) -> Result<CvReport> {
    config.validate()?;
    let data = impute(data)?;
    let label_set = data.label_set();
    if label_set.len() < 2 {
        return Err(Error::Data("cross-validation needs at least two classes".into()));
    }
    let assignments = stratified_fold_indices(&data.labels, folds, reps, seed)?;
    let label_index = |label: &str| label_set.iter().position(|l| l == label);

    let jobs: Vec<(usize, usize)> = (0..reps)
        .flat_map(|r| (0..folds).map(move |f| (r, f)))
        .collect();

    let outcomes: Vec<FoldOutcome> = jobs
        .par_iter()
        .map(|&(rep, fold)| -> Result<FoldOutcome> {
            let test_idx = &assignments[rep][fold];
            let train_idx: Vec<usize> = (0..data.n()).filter(|i| !test_idx.contains(i)).collect();
            let train_set = data.subset(&train_idx);
            let test_set = data.subset(test_idx);

            let model = train(&train_set, config)?;
            let svm = fit_svm(&model, &train_set)?;

            let k = label_set.len();
            let mut svm_confusion = vec![vec![0usize; k]; k];
            let mut ml_confusion = vec![vec![0usize; k]; k];
            let mut svm_correct = 0usize;
            let mut ml_correct = 0usize;
            for (seq, label) in test_set.sequences.iter().zip(test_set.labels.iter()) {
                let features = likelihood_features(&model, seq)?;
                let ml_label = argmax_label(&model.label_set, &features.loglik_raw).to_string();
                let (svm_label, _) = svm.predict(&features)?;
                let ti = label_index(label)
                    .ok_or_else(|| Error::Data(format!("unknown label '{label}'")))?;
                if let Some(pi) = label_index(&svm_label) {
                    svm_confusion[ti][pi] += 1;
                }
                if let Some(pi) = label_index(&ml_label) {
                    ml_confusion[ti][pi] += 1;
                }
                if svm_label == *label {
                    svm_correct += 1;
                }
                if ml_label == *label {
                    ml_correct += 1;
                }
            }
            let n_test = test_set.n() as f64;
            Ok(FoldOutcome {
                svm_accuracy: svm_correct as f64 / n_test,
                ml_accuracy: ml_correct as f64 / n_test,
                svm_confusion,
                ml_confusion,
                relevance: model.metric.relevance_vector(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let k = label_set.len();
    let mut svm_folds = vec![vec![0.0; folds]; reps];
    let mut ml_folds = vec![vec![0.0; folds]; reps];
    let mut svm_confusion = vec![vec![0usize; k]; k];
    let mut ml_confusion = vec![vec![0usize; k]; k];
    let mut per_fold_relevance = Vec::with_capacity(reps * folds);
    for ((rep, fold), outcome) in jobs.iter().zip(outcomes.into_iter()) {
        svm_folds[*rep][*fold] = outcome.svm_accuracy;
        ml_folds[*rep][*fold] = outcome.ml_accuracy;
        for i in 0..k {
            for j in 0..k {
                svm_confusion[i][j] += outcome.svm_confusion[i][j];
                ml_confusion[i][j] += outcome.ml_confusion[i][j];
            }
        }
        per_fold_relevance.push(outcome.relevance);
    }

    let relevance = relevance_profile(&per_fold_relevance)?;
    Ok(CvReport {
        version: FORMAT_VERSION.to_string(),
        label_set,
        feature_names: data.feature_names.clone(),
        folds,
        reps,
        seed,
        config: config.clone(),
        svm: ClassifierStats::from_folds(svm_folds, svm_confusion),
        ml: ClassifierStats::from_folds(ml_folds, ml_confusion),
        per_fold_relevance,
        relevance,
    })
}

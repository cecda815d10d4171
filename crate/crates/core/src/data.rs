//! Labeled sequence datasets: CSV ingestion, normalization, imputation and
//! the synthetic two-class generator.
//!
//! The on-disk format is a long CSV with header
//! `sample_id,time_index,label,<feature_1>,...,<feature_D>`; empty feature
//! cells denote missing values. A JSON sidecar records feature names, the
//! label set and, for synthetic data, the generator parameters.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::FORMAT_VERSION;

/// Floor applied to per-feature standard deviations during normalization.
const STD_FLOOR: f64 = 1e-12;

/// A set of `N` labeled multivariate time series, each a `T x D` matrix
/// (rows = time points, columns = features) on a common time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    pub sequences: Vec<DMatrix<f64>>,
    pub labels: Vec<String>,
    pub sample_ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub time_stamps: Vec<f64>,
    /// `true` = observed. `None` means fully observed.
    pub mask: Option<Vec<DMatrix<bool>>>,
}

impl SequenceDataset {
    pub fn n(&self) -> usize {
        self.sequences.len()
    }

    pub fn t(&self) -> usize {
        self.time_stamps.len()
    }

    pub fn d(&self) -> usize {
        self.feature_names.len()
    }

    /// Structural invariants: consistent shapes and aligned metadata.
    pub fn validate(&self) -> Result<()> {
        let (t, d) = (self.t(), self.d());
        if self.labels.len() != self.n() || self.sample_ids.len() != self.n() {
            return Err(Error::Data(
                "labels/sample ids do not align with the sequences".into(),
            ));
        }
        for (i, seq) in self.sequences.iter().enumerate() {
            if seq.shape() != (t, d) {
                return Err(Error::Data(format!(
                    "sequence {i} has shape {:?}, expected ({t}, {d})",
                    seq.shape()
                )));
            }
        }
        if let Some(mask) = &self.mask {
            if mask.len() != self.n() {
                return Err(Error::Data("mask does not align with the sequences".into()));
            }
            for (i, m) in mask.iter().enumerate() {
                if m.shape() != (t, d) {
                    return Err(Error::Data(format!("mask {i} has wrong shape")));
                }
            }
        }
        Ok(())
    }

    /// Sorted set of distinct labels.
    pub fn label_set(&self) -> Vec<String> {
        let mut set: Vec<String> = self.labels.clone();
        set.sort();
        set.dedup();
        set
    }

    /// True when no entry is missing or non-finite.
    pub fn is_complete(&self) -> bool {
        let mask_ok = match &self.mask {
            None => true,
            Some(mask) => mask.iter().all(|m| m.iter().all(|&b| b)),
        };
        mask_ok && self.sequences.iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Row-and-sample-preserving subset.
    pub fn subset(&self, indices: &[usize]) -> SequenceDataset {
        SequenceDataset {
            sequences: indices.iter().map(|&i| self.sequences[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
            sample_ids: indices.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            time_stamps: self.time_stamps.clone(),
            mask: self
                .mask
                .as_ref()
                .map(|mask| indices.iter().map(|&i| mask[i].clone()).collect()),
        }
    }

    /// All sequences stacked into one `(N*T) x D` matrix.
    pub fn flattened(&self) -> DMatrix<f64> {
        let (n, t, d) = (self.n(), self.t(), self.d());
        let mut out = DMatrix::zeros(n * t, d);
        for (i, seq) in self.sequences.iter().enumerate() {
            for ti in 0..t {
                for di in 0..d {
                    out[(i * t + ti, di)] = seq[(ti, di)];
                }
            }
        }
        out
    }
}

/// Per-feature z-score parameters fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationParams {
    /// Transform one sequence with the stored parameters.
    pub fn apply_to_sequence(&self, seq: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if seq.ncols() != self.mean.len() {
            return Err(Error::Data(format!(
                "sequence has {} features but normalization was fitted on {}",
                seq.ncols(),
                self.mean.len()
            )));
        }
        let mut out = seq.clone();
        for di in 0..self.mean.len() {
            for ti in 0..seq.nrows() {
                out[(ti, di)] = (out[(ti, di)] - self.mean[di]) / self.std[di];
            }
        }
        Ok(out)
    }
}

/// Fit per-feature z-score parameters over all `N*T` entries and return the
/// transformed dataset together with the parameters.
pub fn normalize(data: &SequenceDataset) -> Result<(SequenceDataset, NormalizationParams)> {
    data.validate()?;
    if !data.is_complete() {
        return Err(Error::Data(
            "normalization requires imputed data without missing entries".into(),
        ));
    }
    let (n, t, d) = (data.n(), data.t(), data.d());
    if n * t == 0 {
        return Err(Error::Data("cannot normalize an empty dataset".into()));
    }
    let count = (n * t) as f64;
    let mut mean = vec![0.0; d];
    let mut std = vec![0.0; d];
    for seq in &data.sequences {
        for ti in 0..t {
            for di in 0..d {
                mean[di] += seq[(ti, di)];
            }
        }
    }
    for m in mean.iter_mut() {
        *m /= count;
    }
    for seq in &data.sequences {
        for ti in 0..t {
            for di in 0..d {
                let diff = seq[(ti, di)] - mean[di];
                std[di] += diff * diff;
            }
        }
    }
    for (di, s) in std.iter_mut().enumerate() {
        *s = (*s / count).sqrt();
        if *s < STD_FLOOR {
            log::warn!(
                "feature '{}' is constant; flooring its scale at {STD_FLOOR}",
                data.feature_names[di]
            );
            *s = STD_FLOOR;
        }
    }
    let params = NormalizationParams { mean, std };
    Ok((apply_normalization(data, &params)?, params))
}

/// Apply previously fitted normalization parameters to a dataset.
pub fn apply_normalization(
    data: &SequenceDataset,
    params: &NormalizationParams,
) -> Result<SequenceDataset> {
    if params.mean.len() != data.d() {
        return Err(Error::Data(format!(
            "dataset has {} features but normalization was fitted on {}",
            data.d(),
            params.mean.len()
        )));
    }
    let mut out = data.clone();
    for seq in out.sequences.iter_mut() {
        *seq = params.apply_to_sequence(seq)?;
    }
    Ok(out)
}

/// Fill missing entries: per sample and feature by linear interpolation in
/// time, extending the nearest observed value over leading/trailing gaps;
/// a feature unobserved in a whole sample falls back to the feature mean
/// over the rest of the data.
pub fn impute(data: &SequenceDataset) -> Result<SequenceDataset> {
    data.validate()?;
    let mask = match &data.mask {
        None => return Ok(data.clone()),
        Some(mask) if data.is_complete() => {
            let _ = mask;
            let mut out = data.clone();
            out.mask = None;
            return Ok(out);
        }
        Some(mask) => mask,
    };
    let (n, t, d) = (data.n(), data.t(), data.d());

    // feature means over observed entries, for the whole-sample fallback
    let mut feature_sum = vec![0.0; d];
    let mut feature_count = vec![0usize; d];
    for (seq, m) in data.sequences.iter().zip(mask.iter()) {
        for ti in 0..t {
            for di in 0..d {
                if m[(ti, di)] {
                    feature_sum[di] += seq[(ti, di)];
                    feature_count[di] += 1;
                }
            }
        }
    }
    for di in 0..d {
        if feature_count[di] == 0 {
            return Err(Error::Data(format!(
                "feature '{}' is missing in every sample",
                data.feature_names[di]
            )));
        }
    }

    let times = &data.time_stamps;
    let mut sequences = Vec::with_capacity(n);
    for (seq, m) in data.sequences.iter().zip(mask.iter()) {
        let mut filled = seq.clone();
        for di in 0..d {
            let observed: Vec<usize> = (0..t).filter(|&ti| m[(ti, di)]).collect();
            if observed.is_empty() {
                let mean = feature_sum[di] / feature_count[di] as f64;
                for ti in 0..t {
                    filled[(ti, di)] = mean;
                }
                continue;
            }
            for ti in 0..t {
                if m[(ti, di)] {
                    continue;
                }
                let next = observed.iter().find(|&&o| o > ti);
                let prev = observed.iter().rev().find(|&&o| o < ti);
                filled[(ti, di)] = match (prev, next) {
                    (Some(&p), Some(&q)) => {
                        let w = (times[ti] - times[p]) / (times[q] - times[p]);
                        seq[(p, di)] + w * (seq[(q, di)] - seq[(p, di)])
                    }
                    (Some(&p), None) => seq[(p, di)],
                    (None, Some(&q)) => seq[(q, di)],
                    (None, None) => unreachable!("observed is non-empty"),
                };
            }
        }
        sequences.push(filled);
    }

    Ok(SequenceDataset {
        sequences,
        labels: data.labels.clone(),
        sample_ids: data.sample_ids.clone(),
        feature_names: data.feature_names.clone(),
        time_stamps: data.time_stamps.clone(),
        mask: None,
    })
}

// ---------------------------------------------------------------------------
// CSV input/output
// ---------------------------------------------------------------------------

/// Load a long-format CSV (`sample_id,time_index,label,<features>`).
///
/// Samples are sorted by id, time points numerically; every sample must
/// cover the same time grid exactly once.
pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<SequenceDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    if headers.len() < 4 {
        return Err(Error::Data(
            "expected header sample_id,time_index,label,<feature columns>".into(),
        ));
    }
    for (idx, expect) in ["sample_id", "time_index", "label"].iter().enumerate() {
        if headers.get(idx) != Some(expect) {
            return Err(Error::Data(format!(
                "column {idx} must be '{expect}', found '{}'",
                headers.get(idx).unwrap_or("")
            )));
        }
    }
    let feature_names: Vec<String> = headers.iter().skip(3).map(str::to_string).collect();
    let d = feature_names.len();

    struct Row {
        time: f64,
        values: Vec<Option<f64>>,
    }
    let mut samples: BTreeMap<String, (String, Vec<Row>)> = BTreeMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 3 + d {
            return Err(Error::Data(format!(
                "row {}: expected {} columns, found {}",
                line + 2,
                3 + d,
                record.len()
            )));
        }
        let sample_id = record[0].to_string();
        let time: f64 = record[1]
            .trim()
            .parse()
            .map_err(|_| Error::Data(format!("row {}: non-numeric time_index '{}'", line + 2, &record[1])))?;
        let label = record[2].to_string();
        let mut values = Vec::with_capacity(d);
        for (di, cell) in record.iter().skip(3).enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                values.push(None);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Data(format!(
                        "row {}: non-numeric value '{}' in feature '{}'",
                        line + 2,
                        cell,
                        feature_names[di]
                    ))
                })?;
                values.push(Some(v));
            }
        }
        let entry = samples
            .entry(sample_id.clone())
            .or_insert_with(|| (label.clone(), Vec::new()));
        if entry.0 != label {
            return Err(Error::Data(format!(
                "sample '{sample_id}' carries conflicting labels '{}' and '{label}'",
                entry.0
            )));
        }
        if entry.1.iter().any(|r| r.time == time) {
            return Err(Error::Data(format!(
                "duplicate (sample_id, time_index) = ('{sample_id}', {time})"
            )));
        }
        entry.1.push(Row { time, values });
    }
    if samples.is_empty() {
        return Err(Error::Data("CSV contains no data rows".into()));
    }

    // common time grid
    let mut time_stamps: Vec<f64> = samples
        .values()
        .next()
        .map(|(_, rows)| rows.iter().map(|r| r.time).collect())
        .unwrap_or_default();
    time_stamps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let t = time_stamps.len();
    for (sample_id, (_, rows)) in &samples {
        if rows.len() != t {
            return Err(Error::Data(format!(
                "ragged time grid: sample '{sample_id}' has {} time points, expected {t}",
                rows.len()
            )));
        }
        let mut sample_times: Vec<f64> = rows.iter().map(|r| r.time).collect();
        sample_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sample_times != time_stamps {
            return Err(Error::Data(format!(
                "ragged time grid: sample '{sample_id}' covers different time indices"
            )));
        }
    }

    let mut sequences = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    let mut sample_ids = Vec::with_capacity(samples.len());
    let mut masks = Vec::with_capacity(samples.len());
    let mut any_missing = false;
    for (sample_id, (label, mut rows)) in samples {
        rows.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap());
        let mut seq = DMatrix::zeros(t, d);
        let mut mask = DMatrix::from_element(t, d, true);
        for (ti, row) in rows.iter().enumerate() {
            for di in 0..d {
                match row.values[di] {
                    Some(v) => seq[(ti, di)] = v,
                    None => {
                        mask[(ti, di)] = false;
                        any_missing = true;
                    }
                }
            }
        }
        sequences.push(seq);
        labels.push(label);
        sample_ids.push(sample_id);
        masks.push(mask);
    }

    let dataset = SequenceDataset {
        sequences,
        labels,
        sample_ids,
        feature_names,
        time_stamps,
        mask: if any_missing { Some(masks) } else { None },
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Write a dataset in the long CSV format; masked-out entries become empty
/// cells.
pub fn save_csv<P: AsRef<Path>>(data: &SequenceDataset, path: P) -> Result<()> {
    data.validate()?;
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header = vec!["sample_id".to_string(), "time_index".to_string(), "label".to_string()];
    header.extend(data.feature_names.iter().cloned());
    writer.write_record(&header)?;
    for (i, seq) in data.sequences.iter().enumerate() {
        for ti in 0..data.t() {
            let mut record = vec![
                data.sample_ids[i].clone(),
                format!("{}", data.time_stamps[ti]),
                data.labels[i].clone(),
            ];
            for di in 0..data.d() {
                let observed = data
                    .mask
                    .as_ref()
                    .map_or(true, |mask| mask[i][(ti, di)]);
                if observed {
                    record.push(format!("{}", seq[(ti, di)]));
                } else {
                    record.push(String::new());
                }
            }
            writer.write_record(&record)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// JSON sidecar describing a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub version: String,
    pub feature_names: Vec<String>,
    pub label_set: Vec<String>,
    pub time_stamps: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorMeta>,
}

/// Generator parameters recorded for synthetic datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMeta {
    #[serde(flatten)]
    pub config: SimulateConfig,
    pub informative_features: Vec<String>,
}

impl DatasetMeta {
    pub fn for_dataset(data: &SequenceDataset, generator: Option<GeneratorMeta>) -> Self {
        Self {
            version: FORMAT_VERSION.to_string(),
            feature_names: data.feature_names.clone(),
            label_set: data.label_set(),
            time_stamps: data.time_stamps.clone(),
            generator,
        }
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path.as_ref(), json)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let meta: DatasetMeta = serde_json::from_str(&text)?;
        if meta.version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported metadata version '{}', expected '{FORMAT_VERSION}'",
                meta.version
            )));
        }
        Ok(meta)
    }
}

// ---------------------------------------------------------------------------
// Synthetic two-class generator
// ---------------------------------------------------------------------------

/// Parameters of the synthetic two-class generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub n_per_class: usize,
    pub t: usize,
    pub d: usize,
    pub d_informative: usize,
    pub seed: u64,
    /// Interior breakpoints of the piecewise-linear templates.
    #[serde(default = "default_breakpoints")]
    pub breakpoints: usize,
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
    /// Per-sample amplitude scale range (shrinking/expanding the curves).
    #[serde(default = "default_amp_min")]
    pub amp_min: f64,
    #[serde(default = "default_amp_max")]
    pub amp_max: f64,
    /// Informative template pairs are redrawn until their largest pointwise
    /// gap reaches this value.
    #[serde(default = "default_min_gap")]
    pub min_gap: f64,
}

fn default_breakpoints() -> usize {
    3
}
fn default_noise_sigma() -> f64 {
    0.1
}
fn default_amp_min() -> f64 {
    0.8
}
fn default_amp_max() -> f64 {
    1.2
}
fn default_min_gap() -> f64 {
    1.0
}

impl SimulateConfig {
    pub fn new(n_per_class: usize, t: usize, d: usize, d_informative: usize, seed: u64) -> Self {
        Self {
            n_per_class,
            t,
            d,
            d_informative,
            seed,
            breakpoints: default_breakpoints(),
            noise_sigma: default_noise_sigma(),
            amp_min: default_amp_min(),
            amp_max: default_amp_max(),
            min_gap: default_min_gap(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d_informative > self.d {
            return Err(Error::Config(format!(
                "d_informative ({}) exceeds d ({})",
                self.d_informative, self.d
            )));
        }
        if self.t < 3 {
            return Err(Error::Config(format!("need t >= 3 time points, got {}", self.t)));
        }
        if self.n_per_class == 0 || self.d == 0 {
            return Err(Error::Config("need at least one sample and one feature".into()));
        }
        if !(self.amp_min <= self.amp_max) || self.amp_min <= 0.0 {
            return Err(Error::Config("amplitude range must satisfy 0 < amp_min <= amp_max".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Config("noise sigma must be non-negative".into()));
        }
        Ok(())
    }
}

/// A piecewise-linear template: knot heights at equally spaced knot times
/// over `[0, t-1]`.
struct Template {
    knot_times: Vec<f64>,
    heights: Vec<f64>,
}

impl Template {
    fn sample(rng: &mut ChaCha8Rng, t: usize, breakpoints: usize) -> Self {
        let n_knots = breakpoints + 2;
        let span = (t - 1) as f64;
        let knot_times = (0..n_knots)
            .map(|i| span * i as f64 / (n_knots - 1) as f64)
            .collect();
        let heights = (0..n_knots).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        Self { knot_times, heights }
    }

    fn eval(&self, time: f64) -> f64 {
        let n = self.knot_times.len();
        if time <= self.knot_times[0] {
            return self.heights[0];
        }
        if time >= self.knot_times[n - 1] {
            return self.heights[n - 1];
        }
        let seg = self
            .knot_times
            .windows(2)
            .position(|w| time >= w[0] && time <= w[1])
            .unwrap_or(n - 2);
        let (t0, t1) = (self.knot_times[seg], self.knot_times[seg + 1]);
        let w = (time - t0) / (t1 - t0);
        self.heights[seg] + w * (self.heights[seg + 1] - self.heights[seg])
    }

    fn max_gap(&self, other: &Template, t: usize) -> f64 {
        (0..t)
            .map(|ti| (self.eval(ti as f64) - other.eval(ti as f64)).abs())
            .fold(0.0, f64::max)
    }
}

/// Generate a two-class dataset: the first `d_informative` features follow
/// class-specific piecewise-linear templates, the rest share one template
/// across classes; each sample gets an amplitude scale and additive Gaussian
/// noise. Deterministic for a given configuration.
pub fn simulate(config: &SimulateConfig) -> Result<SequenceDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (t, d) = (config.t, config.d);

    // class-specific templates for informative features, redrawn until the
    // classes actually separate on that feature
    let mut templates_class0 = Vec::with_capacity(d);
    let mut templates_class1 = Vec::with_capacity(d);
    for _ in 0..config.d_informative {
        loop {
            let t0 = Template::sample(&mut rng, t, config.breakpoints);
            let t1 = Template::sample(&mut rng, t, config.breakpoints);
            if t0.max_gap(&t1, t) >= config.min_gap {
                templates_class0.push(t0);
                templates_class1.push(t1);
                break;
            }
        }
    }
    // one class-independent template per remaining feature
    for _ in config.d_informative..d {
        let shared = Template::sample(&mut rng, t, config.breakpoints);
        let copy = Template {
            knot_times: shared.knot_times.clone(),
            heights: shared.heights.clone(),
        };
        templates_class0.push(shared);
        templates_class1.push(copy);
    }

    let noise = Normal::new(0.0, config.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(format!("invalid noise sigma: {e}")))?;
    let n_total = 2 * config.n_per_class;
    let id_width = n_total.to_string().len().max(3);

    let mut sequences = Vec::with_capacity(n_total);
    let mut labels = Vec::with_capacity(n_total);
    let mut sample_ids = Vec::with_capacity(n_total);
    for i in 0..n_total {
        let class = usize::from(i >= config.n_per_class);
        let templates = if class == 0 { &templates_class0 } else { &templates_class1 };
        let amp = config.amp_min + rng.random::<f64>() * (config.amp_max - config.amp_min);
        let mut seq = DMatrix::zeros(t, d);
        for ti in 0..t {
            for di in 0..d {
                let base = templates[di].eval(ti as f64);
                let eps = if config.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                seq[(ti, di)] = amp * base + eps;
            }
        }
        sequences.push(seq);
        labels.push(class.to_string());
        sample_ids.push(format!("s{:0width$}", i + 1, width = id_width));
    }

    Ok(SequenceDataset {
        sequences,
        labels,
        sample_ids,
        feature_names: (1..=d).map(|i| format!("f{i}")).collect(),
        time_stamps: (0..t).map(|ti| ti as f64).collect(),
        mask: None,
    })
}

/// Names of the planted informative features for a generator configuration.
pub fn informative_feature_names(config: &SimulateConfig) -> Vec<String> {
    (1..=config.d_informative).map(|i| format!("f{i}")).collect()
}

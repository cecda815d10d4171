//! C ABI over the tempomap library.
//!
//! Datasets and trained models are opaque handles created and destroyed
//! through this API. Every fallible function returns a [`TempomapStatus`];
//! on failure a description is stored thread-locally and can be fetched
//! with [`tempomap_last_error_message`]. Strings returned by this library
//! must be released with [`tempomap_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::DMatrix;

use tempomap::classify::{fit_svm, likelihood_features};
use tempomap::data::{impute, load_csv, simulate, SequenceDataset, SimulateConfig};
use tempomap::error::Error;
use tempomap::sgtm::{train, SgtmModel, TrainConfig};

/// Result codes of the C API.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TempomapStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Invalid configuration or parameters.
    ConfigError = 3,
    /// Malformed or inconsistent data.
    DataError = 4,
    /// Numerical failure during training or inference.
    NumericalError = 5,
    /// File system failure.
    IoError = 6,
    /// A panic was caught at the FFI boundary.
    InternalError = 7,
}

/// Opaque dataset handle.
pub struct TempomapDataset(SequenceDataset);

/// Opaque trained-model handle.
pub struct TempomapModel(SgtmModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let cstring = CString::new(message)
        .unwrap_or_else(|_| CString::new("error message contained NUL bytes").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn status_of(err: &Error) -> TempomapStatus {
    match err {
        Error::Config(_) => TempomapStatus::ConfigError,
        Error::Data(_) | Error::Csv(_) | Error::Json(_) => TempomapStatus::DataError,
        Error::Numerical(_) => TempomapStatus::NumericalError,
        Error::Io(_) => TempomapStatus::IoError,
    }
}

fn fail(err: Error) -> TempomapStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn guarded<F: FnOnce() -> TempomapStatus>(f: F) -> TempomapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic at the FFI boundary".into());
            TempomapStatus::InternalError
        }
    }
}

/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn utf8_arg<'a>(ptr: *const c_char) -> Result<&'a str, TempomapStatus> {
    if ptr.is_null() {
        set_error("null string argument".into());
        return Err(TempomapStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8".into());
        TempomapStatus::InvalidUtf8
    })
}

/// Last error message of the calling thread, or null when no error was
/// recorded. The caller owns the returned string and must release it with
/// `tempomap_string_free`.
#[no_mangle]
pub extern "C" fn tempomap_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(msg) => msg.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer previously returned by a `tempomap_*`
/// function, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tempomap_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a long-format CSV dataset (`sample_id,time_index,label,<features>`)
/// and store a new dataset handle in `out`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn tempomap_dataset_load_csv(
    path: *const c_char,
    out: *mut *mut TempomapDataset,
) -> TempomapStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null output argument".into());
            return TempomapStatus::NullArgument;
        }
        let path = match utf8_arg(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match load_csv(path) {
            Ok(data) => {
                *out = Box::into_raw(Box::new(TempomapDataset(data)));
                TempomapStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Generate a synthetic two-class dataset (see the library documentation
/// for the generator) and store a new dataset handle in `out`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tempomap_dataset_simulate(
    n_per_class: usize,
    timepoints: usize,
    features: usize,
    d_informative: usize,
    seed: u64,
    out: *mut *mut TempomapDataset,
) -> TempomapStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null output argument".into());
            return TempomapStatus::NullArgument;
        }
        let config = SimulateConfig::new(n_per_class, timepoints, features, d_informative, seed);
        match simulate(&config) {
            Ok(data) => {
                *out = Box::into_raw(Box::new(TempomapDataset(data)));
                TempomapStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of samples in a dataset (0 for a null handle).
#[no_mangle]
pub extern "C" fn tempomap_dataset_num_samples(dataset: *const TempomapDataset) -> usize {
    if dataset.is_null() {
        return 0;
    }
    unsafe { (*dataset).0.n() }
}

/// Number of time points per sequence (0 for a null handle).
#[no_mangle]
pub extern "C" fn tempomap_dataset_num_timepoints(dataset: *const TempomapDataset) -> usize {
    if dataset.is_null() {
        return 0;
    }
    unsafe { (*dataset).0.t() }
}

/// Number of features (0 for a null handle).
#[no_mangle]
pub extern "C" fn tempomap_dataset_num_features(dataset: *const TempomapDataset) -> usize {
    if dataset.is_null() {
        return 0;
    }
    unsafe { (*dataset).0.d() }
}

/// Release a dataset handle.
///
/// # Safety
/// `dataset` must be null or a handle returned by this library, not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn tempomap_dataset_free(dataset: *mut TempomapDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Train a supervised model on a dataset. `config_json` may be null for the
/// default configuration or hold a JSON training configuration. The SVM
/// stage is fitted automatically when at least two labels are present.
///
/// # Safety
/// `dataset` must be a valid dataset handle; `config_json` null or a valid
/// NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tempomap_train(
    dataset: *const TempomapDataset,
    config_json: *const c_char,
    out: *mut *mut TempomapModel,
) -> TempomapStatus {
    guarded(|| {
        if dataset.is_null() || out.is_null() {
            set_error("null dataset or output argument".into());
            return TempomapStatus::NullArgument;
        }
        let config = if config_json.is_null() {
            TrainConfig::default()
        } else {
            let text = match utf8_arg(config_json) {
                Ok(t) => t,
                Err(status) => return status,
            };
            match TrainConfig::from_json(text) {
                Ok(c) => c,
                Err(e) => return fail(e),
            }
        };
        let data = &(*dataset).0;
        let trained = impute(data).and_then(|data| {
            let mut model = train(&data, &config)?;
            if model.n_labels() >= 2 {
                model.svm = Some(fit_svm(&model, &data)?);
            }
            Ok(model)
        });
        match trained {
            Ok(model) => {
                *out = Box::into_raw(Box::new(TempomapModel(model)));
                TempomapStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Load a model bundle from a JSON file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tempomap_model_load(
    path: *const c_char,
    out: *mut *mut TempomapModel,
) -> TempomapStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null output argument".into());
            return TempomapStatus::NullArgument;
        }
        let path = match utf8_arg(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match SgtmModel::load(path) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(TempomapModel(model)));
                TempomapStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Write a model bundle to a JSON file.
///
/// # Safety
/// `model` must be a valid model handle; `path` a valid NUL-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn tempomap_model_save(
    model: *const TempomapModel,
    path: *const c_char,
) -> TempomapStatus {
    guarded(|| {
        if model.is_null() {
            set_error("null model argument".into());
            return TempomapStatus::NullArgument;
        }
        let path = match utf8_arg(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match (*model).0.save(path) {
            Ok(()) => TempomapStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Number of class labels (0 for a null handle).
#[no_mangle]
pub extern "C" fn tempomap_model_num_labels(model: *const TempomapModel) -> usize {
    if model.is_null() {
        return 0;
    }
    unsafe { (*model).0.n_labels() }
}

/// Number of input features (0 for a null handle).
#[no_mangle]
pub extern "C" fn tempomap_model_num_features(model: *const TempomapModel) -> usize {
    if model.is_null() {
        return 0;
    }
    unsafe { (*model).0.dim() }
}

/// Name of the label at `index`, or null when out of range. The caller owns
/// the returned string.
///
/// # Safety
/// `model` must be null or a valid model handle.
#[no_mangle]
pub unsafe extern "C" fn tempomap_model_label_name(
    model: *const TempomapModel,
    index: usize,
) -> *mut c_char {
    if model.is_null() {
        return std::ptr::null_mut();
    }
    let model = &(*model).0;
    match model.label_set.get(index) {
        Some(label) => CString::new(label.as_str())
            .map(CString::into_raw)
            .unwrap_or(std::ptr::null_mut()),
        None => std::ptr::null_mut(),
    }
}

/// # Safety
/// `values` must point to `timepoints * features` readable doubles.
unsafe fn sequence_from_raw(
    values: *const f64,
    timepoints: usize,
    features: usize,
) -> Result<DMatrix<f64>, TempomapStatus> {
    if values.is_null() {
        set_error("null sequence buffer".into());
        return Err(TempomapStatus::NullArgument);
    }
    if timepoints == 0 || features == 0 {
        set_error("sequence must have at least one time point and feature".into());
        return Err(TempomapStatus::DataError);
    }
    let slice = std::slice::from_raw_parts(values, timepoints * features);
    Ok(DMatrix::from_row_slice(timepoints, features, slice))
}

/// Classify one sequence (`values`: row-major `timepoints x features`).
/// Writes the predicted label index into `out_label_index`; when the model
/// carries an SVM stage `out_decision` (nullable) receives its decision
/// value, otherwise NaN.
///
/// # Safety
/// `model` must be a valid model handle, `values` point to
/// `timepoints * features` doubles, `out_label_index` be a valid pointer,
/// `out_decision` null or valid.
#[no_mangle]
pub unsafe extern "C" fn tempomap_predict(
    model: *const TempomapModel,
    values: *const f64,
    timepoints: usize,
    features: usize,
    out_label_index: *mut usize,
    out_decision: *mut f64,
) -> TempomapStatus {
    guarded(|| {
        if model.is_null() || out_label_index.is_null() {
            set_error("null model or output argument".into());
            return TempomapStatus::NullArgument;
        }
        let seq = match sequence_from_raw(values, timepoints, features) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let model = &(*model).0;
        let feats = match likelihood_features(model, &seq) {
            Ok(f) => f,
            Err(e) => return fail(e),
        };
        let (label, decision) = match &model.svm {
            Some(svm) => match svm.predict(&feats) {
                Ok(pair) => pair,
                Err(e) => return fail(e),
            },
            None => {
                let label =
                    tempomap::classify::argmax_label(&model.label_set, &feats.loglik_raw);
                (label.to_string(), f64::NAN)
            }
        };
        let index = model
            .label_set
            .iter()
            .position(|l| *l == label)
            .unwrap_or(0);
        *out_label_index = index;
        if !out_decision.is_null() {
            *out_decision = decision;
        }
        TempomapStatus::Ok
    })
}

/// Per-class sequence log-likelihoods; `out_logliks` must hold
/// `tempomap_model_num_labels` doubles.
///
/// # Safety
/// As for `tempomap_predict`; `out_logliks` must point to enough space.
#[no_mangle]
pub unsafe extern "C" fn tempomap_loglik(
    model: *const TempomapModel,
    values: *const f64,
    timepoints: usize,
    features: usize,
    out_logliks: *mut f64,
) -> TempomapStatus {
    guarded(|| {
        if model.is_null() || out_logliks.is_null() {
            set_error("null model or output argument".into());
            return TempomapStatus::NullArgument;
        }
        let seq = match sequence_from_raw(values, timepoints, features) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let model = &(*model).0;
        match likelihood_features(model, &seq) {
            Ok(f) => {
                let out = std::slice::from_raw_parts_mut(out_logliks, model.n_labels());
                out.copy_from_slice(&f.loglik_raw);
                TempomapStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Per-feature relevance values of the learned metric; `out_relevance` must
/// hold `tempomap_model_num_features` doubles.
///
/// # Safety
/// `model` must be a valid model handle; `out_relevance` must point to
/// enough space.
#[no_mangle]
pub unsafe extern "C" fn tempomap_relevance(
    model: *const TempomapModel,
    out_relevance: *mut f64,
) -> TempomapStatus {
    guarded(|| {
        if model.is_null() || out_relevance.is_null() {
            set_error("null model or output argument".into());
            return TempomapStatus::NullArgument;
        }
        let model = &(*model).0;
        let relevance = model.metric.relevance_vector();
        let out = std::slice::from_raw_parts_mut(out_relevance, model.dim());
        out.copy_from_slice(&relevance);
        TempomapStatus::Ok
    })
}

/// Release a model handle.
///
/// # Safety
/// `model` must be null or a handle returned by this library, not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn tempomap_model_free(model: *mut TempomapModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulate_train_predict_through_the_c_abi() {
        unsafe {
            let mut dataset: *mut TempomapDataset = std::ptr::null_mut();
            let status = tempomap_dataset_simulate(8, 5, 4, 2, 11, &mut dataset);
            assert_eq!(status, TempomapStatus::Ok);
            assert_eq!(tempomap_dataset_num_samples(dataset), 16);
            assert_eq!(tempomap_dataset_num_timepoints(dataset), 5);
            assert_eq!(tempomap_dataset_num_features(dataset), 4);

            let config = CString::new(
                r#"{"grid_rows":2,"grid_cols":2,"max_epochs":10,"relevance":false}"#,
            )
            .unwrap();
            let mut model: *mut TempomapModel = std::ptr::null_mut();
            let status = tempomap_train(dataset, config.as_ptr(), &mut model);
            assert_eq!(status, TempomapStatus::Ok);
            assert_eq!(tempomap_model_num_labels(model), 2);
            assert_eq!(tempomap_model_num_features(model), 4);

            let label0 = tempomap_model_label_name(model, 0);
            assert!(!label0.is_null());
            assert_eq!(CStr::from_ptr(label0).to_str().unwrap(), "0");
            tempomap_string_free(label0);

            // classify the first training sequence through the raw buffer
            let data_ref = &(*dataset).0;
            let seq = &data_ref.sequences[0];
            let mut buffer = Vec::with_capacity(5 * 4);
            for t in 0..5 {
                for d in 0..4 {
                    buffer.push(seq[(t, d)]);
                }
            }
            let mut index = usize::MAX;
            let mut decision = f64::NAN;
            let status = tempomap_predict(model, buffer.as_ptr(), 5, 4, &mut index, &mut decision);
            assert_eq!(status, TempomapStatus::Ok);
            assert_eq!(index, 0);
            assert!(decision.is_finite());

            let mut logliks = vec![0.0f64; 2];
            let status = tempomap_loglik(model, buffer.as_ptr(), 5, 4, logliks.as_mut_ptr());
            assert_eq!(status, TempomapStatus::Ok);
            assert!(logliks[0] > logliks[1]);

            let mut relevance = vec![0.0f64; 4];
            let status = tempomap_relevance(model, relevance.as_mut_ptr());
            assert_eq!(status, TempomapStatus::Ok);
            let norm: f64 = relevance.iter().map(|r| r * r).sum::<f64>();
            assert!((norm - 1.0).abs() < 1e-10);

            tempomap_model_free(model);
            tempomap_dataset_free(dataset);
        }
    }

    #[test]
    fn save_and_load_round_trip() {
        unsafe {
            let dir = std::env::temp_dir().join("tempomap_ffi_test");
            std::fs::create_dir_all(&dir).unwrap();
            let path = dir.join("model.json");
            let cpath = CString::new(path.to_str().unwrap()).unwrap();

            let mut dataset: *mut TempomapDataset = std::ptr::null_mut();
            assert_eq!(
                tempomap_dataset_simulate(6, 4, 3, 1, 5, &mut dataset),
                TempomapStatus::Ok
            );
            let config =
                CString::new(r#"{"grid_rows":2,"grid_cols":2,"max_epochs":4,"relevance":false}"#)
                    .unwrap();
            let mut model: *mut TempomapModel = std::ptr::null_mut();
            assert_eq!(
                tempomap_train(dataset, config.as_ptr(), &mut model),
                TempomapStatus::Ok
            );
            assert_eq!(tempomap_model_save(model, cpath.as_ptr()), TempomapStatus::Ok);

            let mut reloaded: *mut TempomapModel = std::ptr::null_mut();
            assert_eq!(
                tempomap_model_load(cpath.as_ptr(), &mut reloaded),
                TempomapStatus::Ok
            );
            assert_eq!((*model).0, (*reloaded).0);

            tempomap_model_free(model);
            tempomap_model_free(reloaded);
            tempomap_dataset_free(dataset);
            let _ = std::fs::remove_dir_all(&dir);
        }
    }

    #[test]
    fn errors_are_reported_with_messages() {
        unsafe {
            let mut dataset: *mut TempomapDataset = std::ptr::null_mut();
            let missing = CString::new("/nonexistent/definitely/not/here.csv").unwrap();
            let status = tempomap_dataset_load_csv(missing.as_ptr(), &mut dataset);
            assert_ne!(status, TempomapStatus::Ok);
            let msg = tempomap_last_error_message();
            assert!(!msg.is_null());
            assert!(!CStr::from_ptr(msg).to_str().unwrap().is_empty());
            tempomap_string_free(msg);

            // null arguments are refused, not dereferenced
            assert_eq!(
                tempomap_train(std::ptr::null(), std::ptr::null(), std::ptr::null_mut()),
                TempomapStatus::NullArgument
            );
            assert_eq!(tempomap_dataset_num_samples(std::ptr::null()), 0);
        }
    }
}

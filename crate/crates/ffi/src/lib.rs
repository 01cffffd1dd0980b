//! C ABI over the forecasting pipeline.
//!
//! Every fallible function returns a [`UfStatus`]; on failure the message is
//! available from [`uf_last_error`] on the same thread. Handles are opaque
//! and owned by the caller, who releases them with the matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use updrs_forecast::dataset::{generate_synthetic, load_cohort, write_cohort, Cohort, CohortPaths, SynthConfig};
use updrs_forecast::gradsuite::{run_suite, SuiteConfig};
use updrs_forecast::models::{Forecaster, ModelKind};
use updrs_forecast::nncore::Module;
use updrs_forecast::pipeline::{fit_and_evaluate, load_model, prepare, save_model, Bundle, RunConfig};
use updrs_forecast::traineval::{mse, rmse, smape, EvalReport, Metrics, TrainConfig};
use updrs_forecast::{Error, ErrorCategory};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UfStatus {
    Ok = 0,
    /// Null pointer, bad argument or invalid configuration.
    Usage = 1,
    /// Missing or malformed data, I/O failure.
    Data = 2,
    /// Non-finite loss, shape mismatch or a failed gradient check.
    Numerical = 3,
    /// A Rust panic was caught at the boundary.
    Panic = 4,
}

/// Values accepted by the `kind` argument of [`uf_model_train`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UfModelKind {
    Lstm = 0,
    Kan = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UfTrainOptions {
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UfMetrics {
    pub smape: f64,
    pub mse: f64,
    pub rmse: f64,
}

pub struct UfCohort {
    inner: Cohort,
}

pub struct UfModel {
    model: Forecaster,
    bundle: Bundle,
    /// Validation report, absent for loaded models.
    report: Option<EvalReport>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: UfStatus, msg: impl Into<String>) -> UfStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &Error) -> UfStatus {
    match e.category() {
        ErrorCategory::Usage => UfStatus::Usage,
        ErrorCategory::Data => UfStatus::Data,
        ErrorCategory::Numerical => UfStatus::Numerical,
    }
}

/// Runs `f`, turning errors and panics into a status plus last-error text.
fn guard(f: impl FnOnce() -> Result<(), UfStatus>) -> UfStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => UfStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(UfStatus::Panic, msg)
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, UfStatus>;
}

impl<T> OrStatus<T> for updrs_forecast::Result<T> {
    fn or_status(self) -> Result<T, UfStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

unsafe fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, UfStatus> {
    p.as_ref().ok_or_else(|| fail(UfStatus::Usage, format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, UfStatus> {
    p.as_mut().ok_or_else(|| fail(UfStatus::Usage, format!("{what} is null")))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, UfStatus> {
    if p.is_null() {
        return Err(fail(UfStatus::Usage, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(UfStatus::Usage, "path is not valid UTF-8"))
}

unsafe fn slice_arg<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], UfStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(UfStatus::Usage, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn kind_arg(kind: u32) -> Result<ModelKind, UfStatus> {
    match kind {
        0 => Ok(ModelKind::Lstm),
        1 => Ok(ModelKind::Kan),
        k => Err(fail(UfStatus::Usage, format!("unknown model kind {k}"))),
    }
}

fn metrics(m: &Metrics) -> UfMetrics {
    UfMetrics { smape: m.smape, mse: m.mse, rmse: m.rmse }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn uf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn uf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Synthetic cohort with default settings, `n_patients` patients.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn uf_cohort_generate(n_patients: usize, seed: u64, out: *mut *mut UfCohort) -> UfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let inner = generate_synthetic(&SynthConfig { n_patients, seed, ..Default::default() }).or_status()?;
        *out = Box::into_raw(Box::new(UfCohort { inner }));
        Ok(())
    })
}

/// Reads the four cohort CSVs from `dir`.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` as for [`uf_cohort_generate`].
#[no_mangle]
pub unsafe extern "C" fn uf_cohort_load(dir: *const c_char, out: *mut *mut UfCohort) -> UfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let dir = path_arg(dir)?;
        let inner = load_cohort(&CohortPaths::in_dir(dir)).or_status()?;
        *out = Box::into_raw(Box::new(UfCohort { inner }));
        Ok(())
    })
}

/// Writes the four cohort CSVs into `dir`, creating it if needed.
///
/// # Safety
/// `cohort` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn uf_cohort_write(cohort: *const UfCohort, dir: *const c_char) -> UfStatus {
    guard(|| {
        let c = non_null(cohort, "cohort")?;
        let dir = path_arg(dir)?;
        std::fs::create_dir_all(&dir).map_err(|e| fail(UfStatus::Data, e.to_string()))?;
        write_cohort(&c.inner, &CohortPaths::in_dir(dir)).or_status()
    })
}

/// Distinct patients across the clinical and supplemental tables.
///
/// # Safety
/// `cohort` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn uf_cohort_patient_count(cohort: *const UfCohort, out: *mut usize) -> UfStatus {
    guard(|| {
        *out_ptr(out, "out")? = non_null(cohort, "cohort")?.inner.patient_ids().len();
        Ok(())
    })
}

/// # Safety
/// `cohort` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn uf_cohort_free(cohort: *mut UfCohort) {
    if !cohort.is_null() {
        drop(Box::from_raw(cohort));
    }
}

/// Default training options for a model kind.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn uf_train_options_default(kind: u32, out: *mut UfTrainOptions) -> UfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let t = TrainConfig::for_model(kind_arg(kind)?);
        *out = UfTrainOptions {
            lr: t.lr,
            weight_decay: t.weight_decay,
            max_epochs: t.max_epochs,
            patience: t.patience,
            batch_size: t.batch_size,
            seed: t.seed,
        };
        Ok(())
    })
}

/// Splits `cohort` by patient, trains a model of `kind` with the default
/// architecture and evaluates it on the validation patients.
///
/// # Safety
/// `cohort` must be a live handle; `options` null (defaults) or valid;
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn uf_model_train(
    cohort: *const UfCohort,
    kind: u32,
    options: *const UfTrainOptions,
    out: *mut *mut UfModel,
) -> UfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let c = non_null(cohort, "cohort")?;
        let kind = kind_arg(kind)?;
        let mut run = RunConfig::default();
        if let Some(o) = options.as_ref() {
            run.seed = o.seed;
            let t = TrainConfig {
                lr: o.lr,
                weight_decay: o.weight_decay,
                max_epochs: o.max_epochs,
                patience: o.patience,
                batch_size: o.batch_size,
                seed: o.seed,
                grad_clip: None,
            };
            t.validate().or_status()?;
            match kind {
                ModelKind::Lstm => run.lstm_train = t,
                ModelKind::Kan => run.kan_train = t,
            }
        }
        let prepared = prepare(&c.inner, &run).or_status()?;
        let o = fit_and_evaluate(&prepared, &run, kind).or_status()?;
        let bundle = Bundle::new(&o.trained, &prepared, &run);
        *out = Box::into_raw(Box::new(UfModel { model: o.trained.model, bundle, report: Some(o.report) }));
        Ok(())
    })
}

/// Validation metrics of a trained model: `target` 0–3 for UPDRS parts 1–4,
/// 4 for the average.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn uf_model_metrics(model: *const UfModel, target: usize, out: *mut UfMetrics) -> UfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let m = non_null(model, "model")?;
        let r = m.report.as_ref().ok_or_else(|| fail(UfStatus::Usage, "model has no evaluation report"))?;
        *out = match target {
            0..=3 => metrics(&r.per_target[target].1),
            4 => metrics(&r.average),
            t => return Err(fail(UfStatus::Usage, format!("target index {t} out of range"))),
        };
        Ok(())
    })
}

/// Width of one flat feature row accepted by [`uf_model_predict`].
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn uf_model_input_width(model: *const UfModel, out: *mut usize) -> UfStatus {
    guard(|| {
        *out_ptr(out, "out")? = non_null(model, "model")?.bundle.layout.n_features();
        Ok(())
    })
}

/// Trainable parameter count.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn uf_model_param_count(model: *const UfModel, out: *mut usize) -> UfStatus {
    guard(|| {
        *out_ptr(out, "out")? = non_null(model, "model")?.model.param_count();
        Ok(())
    })
}

/// Predicts UPDRS parts 1–4 in score units for `rows` preprocessed feature
/// rows of `cols` values each (row-major). Writes `rows * 4` values.
///
/// # Safety
/// `inputs` must hold `rows * cols` values and `out` room for `out_len`.
#[no_mangle]
pub unsafe extern "C" fn uf_model_predict(
    model: *const UfModel,
    inputs: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
    out_len: usize,
) -> UfStatus {
    guard(|| {
        let m = non_null(model, "model")?;
        let width = m.bundle.layout.n_features();
        if cols != width {
            return Err(fail(UfStatus::Usage, format!("model expects {width} columns, got {cols}")));
        }
        if out_len < rows * 4 {
            return Err(fail(UfStatus::Usage, format!("output needs {} values, has {out_len}", rows * 4)));
        }
        let x = slice_arg(inputs, rows * cols, "inputs")?;
        if rows == 0 {
            return Ok(());
        }
        if out.is_null() {
            return Err(fail(UfStatus::Usage, "out is null"));
        }
        let t = m.model.prepare_rows(x, rows, m.bundle.layout).or_status()?;
        let y = m.model.predict(&t).or_status()?;
        let dst = std::slice::from_raw_parts_mut(out, rows * 4);
        for (i, v) in y.data.iter().enumerate() {
            dst[i] = m.bundle.scaler.unscale(i % 4, *v);
        }
        Ok(())
    })
}

/// Writes the model and its preprocessing state into `dir`.
///
/// # Safety
/// `model` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn uf_model_save(model: *const UfModel, dir: *const c_char) -> UfStatus {
    guard(|| {
        let m = non_null(model, "model")?;
        save_model(&path_arg(dir)?, &m.model, &m.bundle).or_status()
    })
}

/// Loads a model directory written by [`uf_model_save`] or the CLI.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn uf_model_load(dir: *const c_char, out: *mut *mut UfModel) -> UfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let (model, bundle) = load_model(&path_arg(dir)?).or_status()?;
        *out = Box::into_raw(Box::new(UfModel { model, bundle, report: None }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn uf_model_free(model: *mut UfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

unsafe fn metric(
    f: fn(&[f64], &[f64]) -> updrs_forecast::Result<f64>,
    actual: *const f64,
    predicted: *const f64,
    n: usize,
    out: *mut f64,
) -> UfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = f(slice_arg(actual, n, "actual")?, slice_arg(predicted, n, "predicted")?).or_status()?;
        Ok(())
    })
}

/// SMAPE in percent over `n` pairs.
///
/// # Safety
/// Both arrays must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn uf_smape(actual: *const f64, predicted: *const f64, n: usize, out: *mut f64) -> UfStatus {
    metric(smape, actual, predicted, n, out)
}

/// # Safety
/// As for [`uf_smape`].
#[no_mangle]
pub unsafe extern "C" fn uf_mse(actual: *const f64, predicted: *const f64, n: usize, out: *mut f64) -> UfStatus {
    metric(mse, actual, predicted, n, out)
}

/// # Safety
/// As for [`uf_smape`].
#[no_mangle]
pub unsafe extern "C" fn uf_rmse(actual: *const f64, predicted: *const f64, n: usize, out: *mut f64) -> UfStatus {
    metric(rmse, actual, predicted, n, out)
}

/// Runs the gradient-check suite with step `eps`; `all_pass` receives 1 when
/// every layer family passes.
///
/// # Safety
/// `all_pass` must be writable.
#[no_mangle]
pub unsafe extern "C" fn uf_gradcheck(eps: f64, all_pass: *mut i32) -> UfStatus {
    guard(|| {
        let out = out_ptr(all_pass, "all_pass")?;
        let r = run_suite(&SuiteConfig { eps, ..Default::default() }).or_status()?;
        *out = i32::from(r.iter().all(|f| f.pass));
        Ok(())
    })
}

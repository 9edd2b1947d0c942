//! C ABI over `ipoc_vpc`.
//!
//! Every fallible function returns an [`IpocStatus`]; on failure the message
//! is kept per thread and read with [`ipoc_last_error_message`]. Handles are
//! opaque heap objects released with the matching `*_free` function.
//! Strings are NUL-terminated UTF-8. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ipoc_vpc::cli::io;
use ipoc_vpc::coxph::ConvergenceOptions;
use ipoc_vpc::estimators::Dataset;
use ipoc_vpc::studygen::{generate_study, StudySpec};
use ipoc_vpc::vpc::{fit_models, run_vpc_with_models, Algorithm, FittedModels, VpcConfig, VpcResult, WeightForm};
use ipoc_vpc::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpocStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Weight = 4,
    NonConvergence = 5,
    Separation = 6,
    Parse = 7,
    Io = 8,
    Format = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpocAlgorithm {
    Standard = 0,
    StandardCensored = 1,
    Ipoc = 2,
    Marginal = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpocWeightForm {
    Simplified = 0,
    Full = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpocSeries {
    Mean = 0,
    Lower = 1,
    Upper = 2,
    Observed = 3,
}

/// VPC settings. Zero `workers` uses the shared pool; non-positive
/// `max_weight` disables the weight cap.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IpocVpcOptions {
    pub replicates: usize,
    pub seed: u64,
    pub grid_size: usize,
    pub lower_quantile: f64,
    pub upper_quantile: f64,
    pub weight_form: IpocWeightForm,
    pub max_weight: f64,
    pub workers: usize,
}

pub struct IpocDataset(Dataset);
pub struct IpocModels(FittedModels);
pub struct IpocVpcResult(VpcResult);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> IpocStatus {
    match err {
        Error::Domain(_) => IpocStatus::Domain,
        Error::Argument(_) => IpocStatus::InvalidArgument,
        Error::Weight { .. } => IpocStatus::Weight,
        Error::NonConvergence { .. } => IpocStatus::NonConvergence,
        Error::Separation { .. } => IpocStatus::Separation,
        Error::Replicate { source, .. } => status_of(source),
        Error::Parse { .. } => IpocStatus::Parse,
        Error::Io(_) => IpocStatus::Io,
        Error::Json(_) | Error::Csv(_) => IpocStatus::Format,
    }
}

struct Failure(IpocStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure(IpocStatus::Io, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> IpocStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IpocStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            IpocStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(IpocStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(IpocStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Copies `s` NUL-terminated into `buf` when it fits. Returns the required
/// size including the terminator.
unsafe fn copy_str(s: &str, buf: *mut c_char, len: usize) -> usize {
    let need = s.len() + 1;
    if !buf.is_null() && len >= need {
        ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
        *buf.add(s.len()) = 0;
    }
    need
}

/// Writes the calling thread's last error message into `buf`. Returns the
/// buffer size needed; nothing is written when `len` is smaller than that.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ipoc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| copy_str(&e.borrow(), buf, len))
}

/// Reads a dataset CSV (`subject_id,time,event,<covariates>`).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ipoc_dataset_read_csv(path: *const c_char, out: *mut *mut IpocDataset) -> IpocStatus {
    guard(|| {
        let path = text(path, "path")?;
        let data = io::read_dataset(BufReader::new(File::open(path)?))?;
        emit(out, IpocDataset(data))
    })
}

/// Generates a synthetic study from a key=value spec; null `spec` selects
/// the built-in default study.
///
/// # Safety
/// `spec` must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ipoc_dataset_generate(spec: *const c_char, out: *mut *mut IpocDataset) -> IpocStatus {
    guard(|| {
        let spec = if spec.is_null() {
            StudySpec::default()
        } else {
            StudySpec::parse(text(spec, "spec")?)?
        };
        emit(out, IpocDataset(generate_study(&spec)?))
    })
}

/// # Safety
/// `data` must be a live dataset handle or null.
#[no_mangle]
pub unsafe extern "C" fn ipoc_dataset_len(data: *const IpocDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `data` must be a live dataset handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ipoc_dataset_write_csv(data: *const IpocDataset, path: *const c_char) -> IpocStatus {
    guard(|| {
        let data = borrow(data, "dataset")?;
        let path = text(path, "path")?;
        let mut w = BufWriter::new(File::create(path)?);
        io::write_dataset(&data.0, &mut w)?;
        w.flush()?;
        Ok(())
    })
}

/// # Safety
/// `data` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ipoc_dataset_free(data: *mut IpocDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Fits the Cox event model on every covariate column and the censoring model.
///
/// # Safety
/// `data` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ipoc_models_fit(data: *const IpocDataset, out: *mut *mut IpocModels) -> IpocStatus {
    guard(|| {
        let data = borrow(data, "dataset")?;
        let models = fit_models(&data.0, None, &ConvergenceOptions::default())?;
        emit(out, IpocModels(models))
    })
}

/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ipoc_models_read_json(path: *const c_char, out: *mut *mut IpocModels) -> IpocStatus {
    guard(|| {
        let path = text(path, "path")?;
        let models = io::read_models(BufReader::new(File::open(path)?))?;
        emit(out, IpocModels(models))
    })
}

/// # Safety
/// `models` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ipoc_models_write_json(models: *const IpocModels, path: *const c_char) -> IpocStatus {
    guard(|| {
        let models = borrow(models, "models")?;
        let path = text(path, "path")?;
        let mut w = BufWriter::new(File::create(path)?);
        io::write_models(&models.0, &mut w)?;
        w.flush()?;
        Ok(())
    })
}

/// Number of Cox coefficients.
///
/// # Safety
/// `models` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ipoc_models_dim(models: *const IpocModels) -> usize {
    models.as_ref().map_or(0, |m| m.0.event_model.beta().len())
}

/// Copies the coefficients into `out`, which must hold `ipoc_models_dim` values.
///
/// # Safety
/// `models` must be a live handle; `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ipoc_models_beta(models: *const IpocModels, out: *mut f64, len: usize) -> IpocStatus {
    guard(|| {
        let beta = borrow(models, "models")?.0.event_model.beta();
        if out.is_null() {
            return Err(null("output buffer"));
        }
        if len < beta.len() {
            return Err(Failure(IpocStatus::BufferTooSmall, format!("need {} values", beta.len())));
        }
        ptr::copy_nonoverlapping(beta.as_ptr(), out, beta.len());
        Ok(())
    })
}

/// Conditional survival `exp(−Λ₀(t)·exp(βᵀy))` for covariates `y`.
///
/// # Safety
/// `models` must be a live handle; `y` valid for `n` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ipoc_models_cond_survival(
    models: *const IpocModels,
    y: *const f64,
    n: usize,
    t: f64,
    out: *mut f64,
) -> IpocStatus {
    guard(|| {
        let models = borrow(models, "models")?;
        let y = if n == 0 {
            &[][..]
        } else if y.is_null() {
            return Err(null("covariates"));
        } else {
            std::slice::from_raw_parts(y, n)
        };
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = models.0.event_model.cond_survival(y, t)?;
        Ok(())
    })
}

/// # Safety
/// `models` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ipoc_models_free(models: *mut IpocModels) {
    if !models.is_null() {
        drop(Box::from_raw(models));
    }
}

#[no_mangle]
pub extern "C" fn ipoc_vpc_default_options() -> IpocVpcOptions {
    let d = VpcConfig::default();
    IpocVpcOptions {
        replicates: d.replicates,
        seed: d.seed,
        grid_size: d.grid_size,
        lower_quantile: d.quantiles.0,
        upper_quantile: d.quantiles.1,
        weight_form: IpocWeightForm::Simplified,
        max_weight: 0.0,
        workers: 0,
    }
}

/// Runs a VPC. `stratify_by` names a covariate column, or is null for a
/// single stratum.
///
/// # Safety
/// Handles must be live; `options` readable; `stratify_by` null or
/// NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ipoc_vpc_run(
    data: *const IpocDataset,
    models: *const IpocModels,
    algorithm: IpocAlgorithm,
    options: *const IpocVpcOptions,
    stratify_by: *const c_char,
    out: *mut *mut IpocVpcResult,
) -> IpocStatus {
    guard(|| {
        let data = borrow(data, "dataset")?;
        let models = borrow(models, "models")?;
        let o = borrow(options, "options")?;
        let config = VpcConfig {
            replicates: o.replicates,
            seed: o.seed,
            grid_size: o.grid_size,
            grid: None,
            quantiles: (o.lower_quantile, o.upper_quantile),
            stratify_by: if stratify_by.is_null() {
                None
            } else {
                Some(text(stratify_by, "stratify_by")?.to_string())
            },
            weight_form: match o.weight_form {
                IpocWeightForm::Simplified => WeightForm::Simplified,
                IpocWeightForm::Full => WeightForm::Full,
            },
            max_weight: (o.max_weight > 0.0).then_some(o.max_weight),
            workers: (o.workers > 0).then_some(o.workers),
        };
        let algorithm = match algorithm {
            IpocAlgorithm::Standard => Algorithm::Standard,
            IpocAlgorithm::StandardCensored => Algorithm::StandardCensored,
            IpocAlgorithm::Ipoc => Algorithm::Ipoc,
            IpocAlgorithm::Marginal => Algorithm::Marginal,
        };
        let result = run_vpc_with_models(&data.0, &models.0, algorithm, &config)?;
        emit(out, IpocVpcResult(result))
    })
}

/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ipoc_vpc_stratum_count(result: *const IpocVpcResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.strata.len())
}

/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ipoc_vpc_grid_len(result: *const IpocVpcResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.grid.len())
}

/// Copies the evaluation grid into `out`.
///
/// # Safety
/// `result` must be a live handle; `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ipoc_vpc_grid(result: *const IpocVpcResult, out: *mut f64, len: usize) -> IpocStatus {
    guard(|| {
        let grid = &borrow(result, "result")?.0.grid;
        copy_values(grid, out, len)
    })
}

unsafe fn copy_values(values: &[f64], out: *mut f64, len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if len < values.len() {
        return Err(Failure(IpocStatus::BufferTooSmall, format!("need {} values", values.len())));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

/// Copies the label of stratum `index` (for example `placebo=1`) into `buf`.
/// Returns the size needed including the terminator, or 0 for a bad index.
///
/// # Safety
/// `result` must be a live handle; `buf` null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ipoc_vpc_stratum_label(
    result: *const IpocVpcResult,
    index: usize,
    buf: *mut c_char,
    len: usize,
) -> usize {
    match result.as_ref().and_then(|r| r.0.strata.get(index)) {
        Some(s) => copy_str(&s.label, buf, len),
        None => 0,
    }
}

/// Copies one band series of stratum `index` on the grid into `out`.
///
/// # Safety
/// `result` must be a live handle; `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ipoc_vpc_series(
    result: *const IpocVpcResult,
    index: usize,
    series: IpocSeries,
    out: *mut f64,
    len: usize,
) -> IpocStatus {
    guard(|| {
        let r = &borrow(result, "result")?.0;
        let s = r
            .strata
            .get(index)
            .ok_or_else(|| Failure(IpocStatus::InvalidArgument, format!("no stratum {index}")))?;
        let observed;
        let values = match series {
            IpocSeries::Mean => &s.band.mean,
            IpocSeries::Lower => &s.band.lower,
            IpocSeries::Upper => &s.band.upper,
            IpocSeries::Observed => {
                observed = s.observed.survival.eval_grid(&r.grid);
                &observed
            }
        };
        copy_values(values, out, len)
    })
}

/// Writes the band CSV (`stratum,time,mean,lower,upper,observed_km`).
///
/// # Safety
/// `result` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ipoc_vpc_write_csv(result: *const IpocVpcResult, path: *const c_char) -> IpocStatus {
    guard(|| {
        let result = borrow(result, "result")?;
        let path = text(path, "path")?;
        let mut w = BufWriter::new(File::create(path)?);
        io::write_bands(&result.0, &mut w)?;
        w.flush()?;
        Ok(())
    })
}

/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ipoc_vpc_free(result: *mut IpocVpcResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

//! C ABI for the mpec pipeline.
//!
//! Trials and fitted models cross the boundary as opaque handles that the
//! caller releases with the matching `*_free` function. Every fallible call
//! returns an [`MpecStatus`]; on failure a message for the calling thread is
//! available from [`mpec_last_error`]. Panics never unwind into C: they are
//! caught and reported as [`MpecStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use mpec::config::{parse_json, RunConfig};
use mpec::data::{decode_archive, read_trials};
use mpec::ensemble::{mpec_fit, MpecModel as Model};
use mpec::features::Trial;
use mpec::manifold::airm_distance;
use mpec::model_io::{load_model, save_model};
use mpec::{ErrorCategory, MpecError, SpdMatrix, SymMatrix};

/// Result of every fallible call. The three error categories share their
/// numeric values with the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpecStatus {
    Ok = 0,
    /// Invalid configuration or parameter value.
    Config = 2,
    /// Malformed, inconsistent or unreadable input data.
    Data = 3,
    /// A numerical routine failed (for example a matrix lost definiteness).
    Numerical = 4,
    /// A required pointer argument was null.
    NullPointer = 10,
    /// A string was not valid UTF-8 or a length did not match.
    InvalidArgument = 11,
    /// The library panicked; the handles passed in should be freed and not
    /// used again.
    Panic = 12,
}

/// A list of labelled multichannel trials.
pub struct MpecTrials {
    trials: Vec<Trial>,
}

/// A fitted classification pipeline.
pub struct MpecModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure {
    status: MpecStatus,
    message: String,
}

impl Failure {
    fn new(status: MpecStatus, message: impl Into<String>) -> Self {
        Failure {
            status,
            message: message.into(),
        }
    }
}

impl From<MpecError> for Failure {
    fn from(e: MpecError) -> Self {
        let status = match e.category() {
            ErrorCategory::Config => MpecStatus::Config,
            ErrorCategory::Data => MpecStatus::Data,
            ErrorCategory::Numerical => MpecStatus::Numerical,
        };
        Failure::new(status, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = text);
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> MpecStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => MpecStatus::Ok,
        Ok(Err(f)) => {
            set_last_error(&f.message);
            f.status
        }
        Err(payload) => {
            let detail = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {detail}"));
            MpecStatus::Panic
        }
    }
}

fn non_null<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, Failure> {
    // SAFETY: callers pass pointers obtained from this library or valid C
    // objects, as documented on each exported function.
    unsafe { ptr.as_ref() }.ok_or_else(|| Failure::new(MpecStatus::NullPointer, format!("{name} is null")))
}

fn out_slot<'a, T>(ptr: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: as for `non_null`; the caller owns the output location.
    unsafe { ptr.as_mut() }.ok_or_else(|| Failure::new(MpecStatus::NullPointer, format!("{name} is null")))
}

fn utf8<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure::new(MpecStatus::NullPointer, format!("{name} is null")));
    }
    // SAFETY: non-null and documented to be a NUL-terminated string.
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| Failure::new(MpecStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

fn slice<'a, T>(ptr: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::new(MpecStatus::NullPointer, format!("{name} is null")));
    }
    // SAFETY: non-null and documented to hold `len` readable elements.
    Ok(unsafe { std::slice::from_raw_parts(ptr, len) })
}

fn publish<T>(out: &mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the most recent failure on the calling thread, or an empty
/// string. The pointer stays valid until the next failing call on the same
/// thread.
#[no_mangle]
pub extern "C" fn mpec_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mpec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reads trials from a binary archive, or from a JSON manifest of CSV files
/// when the path ends in `.json`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mpec_trials_read(path: *const c_char, out: *mut *mut MpecTrials) -> MpecStatus {
    guard(|| {
        let out = out_slot(out, "out")?;
        let path = PathBuf::from(utf8(path, "path")?);
        publish(out, MpecTrials { trials: read_trials(&path)? });
        Ok(())
    })
}

/// Decodes trials from an in-memory binary archive.
///
/// # Safety
/// `bytes` must point to `len` readable bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mpec_trials_from_buffer(bytes: *const u8, len: usize, out: *mut *mut MpecTrials) -> MpecStatus {
    guard(|| {
        let out = out_slot(out, "out")?;
        let trials = decode_archive(slice(bytes, len, "bytes")?)?;
        publish(out, MpecTrials { trials });
        Ok(())
    })
}

/// Builds trials from a dense array laid out trial by trial, each trial
/// channel-major: `data[(i * channels + c) * samples + t]`.
///
/// # Safety
/// `data` must hold `n_trials * channels * samples` doubles, `labels` must
/// hold `n_trials` entries and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mpec_trials_from_arrays(
    data: *const f64,
    labels: *const u32,
    n_trials: usize,
    channels: usize,
    samples: usize,
    out: *mut *mut MpecTrials,
) -> MpecStatus {
    guard(|| {
        let out = out_slot(out, "out")?;
        let size = n_trials
            .checked_mul(channels)
            .and_then(|v| v.checked_mul(samples))
            .ok_or_else(|| Failure::new(MpecStatus::InvalidArgument, "array size overflows"))?;
        let data = slice(data, size, "data")?;
        let labels = slice(labels, n_trials, "labels")?;
        let per_trial = channels * samples;
        let trials = labels
            .iter()
            .enumerate()
            .map(|(i, &label)| {
                let block = data[i * per_trial..(i + 1) * per_trial].to_vec();
                Trial::new(channels, samples, block, label as usize)
            })
            .collect::<mpec::Result<Vec<_>>>()?;
        if trials.is_empty() {
            return Err(MpecError::EmptyInput("trials").into());
        }
        publish(out, MpecTrials { trials });
        Ok(())
    })
}

/// Number of trials in the handle, or 0 for a null handle.
///
/// # Safety
/// `trials` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mpec_trials_len(trials: *const MpecTrials) -> usize {
    trials.as_ref().map_or(0, |t| t.trials.len())
}

/// Releases a trials handle. Null is ignored.
///
/// # Safety
/// `trials` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mpec_trials_free(trials: *mut MpecTrials) {
    if !trials.is_null() {
        drop(Box::from_raw(trials));
    }
}

/// Fits the full pipeline on every trial in the handle. `config_json` uses
/// the command-line configuration schema and may be null for the defaults;
/// `seed` overrides its seed.
///
/// # Safety
/// `trials` must be a live handle, `config_json` null or a NUL-terminated
/// string, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mpec_model_fit(
    trials: *const MpecTrials,
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut MpecModel,
) -> MpecStatus {
    guard(|| {
        let out = out_slot(out, "out")?;
        let trials = non_null(trials, "trials")?;
        let mut cfg: RunConfig = if config_json.is_null() {
            RunConfig::default()
        } else {
            parse_json(utf8(config_json, "config_json")?, "config_json")?
        };
        cfg.seed = seed;
        cfg.validate()?;
        let model = mpec_fit(&trials.trials, &cfg.pipeline(), seed)?;
        publish(out, MpecModel { model });
        Ok(())
    })
}

/// Writes one predicted class per trial into `out_classes`, whose length
/// `len` must equal the number of trials.
///
/// # Safety
/// `model` and `trials` must be live handles and `out_classes` must hold
/// `len` writable entries.
#[no_mangle]
pub unsafe extern "C" fn mpec_model_predict(
    model: *const MpecModel,
    trials: *const MpecTrials,
    out_classes: *mut u32,
    len: usize,
) -> MpecStatus {
    guard(|| {
        let model = non_null(model, "model")?;
        let trials = non_null(trials, "trials")?;
        if len != trials.trials.len() {
            return Err(Failure::new(
                MpecStatus::InvalidArgument,
                format!("output length {len} differs from trial count {}", trials.trials.len()),
            ));
        }
        if out_classes.is_null() && len > 0 {
            return Err(Failure::new(MpecStatus::NullPointer, "out_classes is null"));
        }
        let predicted = model.model.predict(&trials.trials)?;
        for (i, class) in predicted.into_iter().enumerate() {
            *out_classes.add(i) = class as u32;
        }
        Ok(())
    })
}

/// Number of classes the model distinguishes, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mpec_model_class_count(model: *const MpecModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.class_count)
}

/// Saves a model file.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mpec_model_save(model: *const MpecModel, path: *const c_char) -> MpecStatus {
    guard(|| {
        let model = non_null(model, "model")?;
        let path = PathBuf::from(utf8(path, "path")?);
        save_model(&model.model, &path)?;
        Ok(())
    })
}

/// Loads a model file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mpec_model_load(path: *const c_char, out: *mut *mut MpecModel) -> MpecStatus {
    guard(|| {
        let out = out_slot(out, "out")?;
        let path = PathBuf::from(utf8(path, "path")?);
        publish(out, MpecModel { model: load_model(&path)? });
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mpec_model_free(model: *mut MpecModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Affine-invariant geodesic distance between two symmetric positive
/// definite `n × n` matrices given in row-major order.
///
/// # Safety
/// `a` and `b` must each hold `n * n` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mpec_airm_distance(a: *const f64, b: *const f64, n: usize, out: *mut f64) -> MpecStatus {
    guard(|| {
        let out = out_slot(out, "out")?;
        let len = n
            .checked_mul(n)
            .ok_or_else(|| Failure::new(MpecStatus::InvalidArgument, "matrix size overflows"))?;
        let spd = |ptr, name| -> Result<SpdMatrix, Failure> {
            let sym = SymMatrix::new(n, slice(ptr, len, name)?.to_vec())?;
            Ok(SpdMatrix::try_new(sym)?)
        };
        *out = airm_distance(&spd(a, "a")?, &spd(b, "b")?)?;
        Ok(())
    })
}

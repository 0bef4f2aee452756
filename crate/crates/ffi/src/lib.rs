//! C interface to the floodaid pipeline.
//!
//! Datasets and models are opaque heap handles created by `fa_*` constructors
//! and released with the matching `*_free`. Every fallible call returns an
//! [`FaStatus`]; on failure a description is available from
//! [`fa_last_error`] until the next failing call on the same thread.
//! Panics are caught at the boundary and reported as `FA_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use floodaid::dataset::{generate_synthetic, load_csv, write_csv, Dataset, SyntheticConfig};
use floodaid::model::{load_checkpoint, save_checkpoint, FairModel, Variant};
use floodaid::priority::rank_dataset;
use floodaid::trainer::{train, TrainConfig};
use floodaid::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Data = 4,
    Config = 5,
    Numeric = 6,
    Integrity = 7,
    Panic = 8,
}

/// Which network to train.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaVariant {
    Baseline = 0,
    Fair = 1,
}

/// Opaque dataset handle.
pub struct FaDataset {
    inner: Dataset,
}

/// Opaque trained-model handle.
pub struct FaModel {
    inner: FairModel,
    train_ids: Vec<String>,
}

/// Training options; obtain defaults from [`fa_train_options_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct FaTrainOptions {
    pub variant: FaVariant,
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FaStatus {
    match e {
        Error::Io { .. } => FaStatus::Io,
        Error::Config(_) => FaStatus::Config,
        Error::Numeric(_) => FaStatus::Numeric,
        Error::Integrity(_) => FaStatus::Integrity,
        Error::Invalid(_) | Error::Shape(_) => FaStatus::InvalidArgument,
        _ => FaStatus::Data,
    }
}

struct Fail(FaStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(FaStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FaStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            FaStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(FaStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn dataset_ref<'a>(d: *const FaDataset) -> Result<&'a Dataset, Fail> {
    d.as_ref().map(|d| &d.inner).ok_or_else(|| null("dataset"))
}

unsafe fn model_ref<'a>(m: *const FaModel) -> Result<&'a FaModel, Fail> {
    m.as_ref().ok_or_else(|| null("model"))
}

unsafe fn out_slice<'a, T>(ptr: *mut T, len: usize, need: usize) -> Result<&'a mut [T], Fail> {
    if ptr.is_null() {
        return Err(null("output buffer"));
    }
    if len != need {
        return Err(Fail(
            FaStatus::InvalidArgument,
            format!("output buffer holds {len} values, dataset has {need} rows"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

/// Message for the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates the default synthetic dataset with the given size and seed.
/// Zero for `n_upazilas` or `n_districts` keeps the default.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn fa_dataset_generate(
    seed: u64,
    n_upazilas: usize,
    n_districts: usize,
    out: *mut *mut FaDataset,
) -> FaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let d = SyntheticConfig::default();
        let cfg = SyntheticConfig {
            seed,
            n_upazilas: if n_upazilas == 0 { d.n_upazilas } else { n_upazilas },
            n_districts: if n_districts == 0 { d.n_districts } else { n_districts },
            ..d
        };
        let inner = generate_synthetic(&cfg)?.dataset;
        *out = Box::into_raw(Box::new(FaDataset { inner }));
        Ok(())
    })
}

/// Loads a dataset CSV.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fa_dataset_load_csv(path: *const c_char, out: *mut *mut FaDataset) -> FaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = load_csv(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(FaDataset { inner }));
        Ok(())
    })
}

/// Writes a dataset as CSV.
///
/// # Safety
/// `dataset` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fa_dataset_save_csv(dataset: *const FaDataset, path: *const c_char) -> FaStatus {
    guard(|| {
        write_csv(dataset_ref(dataset)?, path_arg(path)?)?;
        Ok(())
    })
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn fa_dataset_len(dataset: *const FaDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.len())
}

/// Copies the damage targets into `out` (`len` must equal the row count).
///
/// # Safety
/// `dataset` must come from this library; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fa_dataset_targets(dataset: *const FaDataset, out: *mut f64, len: usize) -> FaStatus {
    guard(|| {
        let d = dataset_ref(dataset)?;
        out_slice(out, len, d.len())?.copy_from_slice(&d.targets());
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or an unfreed handle from this library.
#[no_mangle]
pub unsafe extern "C" fn fa_dataset_free(dataset: *mut FaDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

#[no_mangle]
pub extern "C" fn fa_train_options_default() -> FaTrainOptions {
    let d = TrainConfig::default();
    FaTrainOptions {
        variant: FaVariant::Fair,
        lambda: d.lambda,
        epochs: d.epochs,
        batch_size: d.batch_size,
        learning_rate: d.lr,
        seed: d.seed,
    }
}

/// Trains on every row of `dataset`.
///
/// # Safety
/// `dataset` must come from this library; `options` may be null for the
/// defaults; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fa_train(
    dataset: *const FaDataset,
    options: *const FaTrainOptions,
    out: *mut *mut FaModel,
) -> FaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let data = dataset_ref(dataset)?;
        let o = options.as_ref().copied().unwrap_or_else(|| fa_train_options_default());
        let config = TrainConfig {
            variant: match o.variant {
                FaVariant::Baseline => Variant::Baseline,
                FaVariant::Fair => Variant::Fair,
            },
            lambda: o.lambda,
            epochs: o.epochs,
            batch_size: o.batch_size,
            lr: o.learning_rate,
            seed: o.seed,
            ..TrainConfig::default()
        };
        let (inner, _) = train(data, &config)?;
        *out = Box::into_raw(Box::new(FaModel { inner, train_ids: data.ids() }));
        Ok(())
    })
}

/// Predicted damage (USD M) per row, in row order.
///
/// # Safety
/// Handles must come from this library; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fa_model_predict(
    model: *const FaModel,
    dataset: *const FaDataset,
    out: *mut f64,
    len: usize,
) -> FaStatus {
    guard(|| {
        let (m, d) = (model_ref(model)?, dataset_ref(dataset)?);
        let buf = out_slice(out, len, d.len())?;
        buf.copy_from_slice(&m.inner.predict(d)?);
        Ok(())
    })
}

/// Priority scores and 1-based ranks per row, in row order. Either output
/// may be null.
///
/// # Safety
/// Handles must come from this library; non-null outputs must hold `len`
/// values.
#[no_mangle]
pub unsafe extern "C" fn fa_model_priority(
    model: *const FaModel,
    dataset: *const FaDataset,
    scores: *mut f64,
    ranks: *mut usize,
    len: usize,
) -> FaStatus {
    guard(|| {
        let (m, d) = (model_ref(model)?, dataset_ref(dataset)?);
        if len != d.len() {
            return Err(Fail(
                FaStatus::InvalidArgument,
                format!("output buffers hold {len} values, dataset has {} rows", d.len()),
            ));
        }
        let entries = rank_dataset(d, &m.inner.predict(d)?)?;
        let ids = d.ids();
        let mut by_id = std::collections::HashMap::new();
        for e in &entries {
            by_id.insert(e.upazila_id.as_str(), e);
        }
        for (i, id) in ids.iter().enumerate() {
            let e = by_id[id.as_str()];
            if !scores.is_null() {
                *scores.add(i) = e.priority_score;
            }
            if !ranks.is_null() {
                *ranks.add(i) = e.rank;
            }
        }
        Ok(())
    })
}

/// Total trainable parameters, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn fa_model_parameter_count(model: *const FaModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.parameter_count())
}

/// Saves a checkpoint that the command line tool can also read.
///
/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fa_model_save(model: *const FaModel, path: *const c_char) -> FaStatus {
    guard(|| {
        let m = model_ref(model)?;
        save_checkpoint(&m.inner, m.train_ids.clone(), serde_json::Value::Null, path_arg(path)?)?;
        Ok(())
    })
}

/// Loads a checkpoint, verifying its integrity hash.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fa_model_load(path: *const c_char, out: *mut *mut FaModel) -> FaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (inner, ckpt) = load_checkpoint(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(FaModel { inner, train_ids: ckpt.train_ids }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or an unfreed handle from this library.
#[no_mangle]
pub unsafe extern "C" fn fa_model_free(model: *mut FaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

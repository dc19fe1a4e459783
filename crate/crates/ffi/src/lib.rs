//! C ABI for the igmn learners.
//!
//! Every function returns an [`IgmnStatus`]; on failure the message is
//! available from [`igmn_last_error`] on the same thread. Models are opaque
//! handles created by [`igmn_model_new`] or [`igmn_model_load`] and released
//! with [`igmn_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use igmn::model_file::ModelFile;
use igmn::{Error, LearnerConfig, Mixture, Partition, Representation};

/// Status codes returned by every function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IgmnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Numerical = 4,
    Io = 5,
    Format = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IgmnRepresentation {
    /// Covariance matrices with dense inversion (reference learner).
    Covariance = 0,
    /// Precision matrices with rank-one updates (fast learner).
    Precision = 1,
}

/// Learner hyperparameters. Fill with [`igmn_config_default`] first.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct IgmnConfig {
    pub delta: f64,
    pub beta: f64,
    pub v_min: u64,
    pub sp_min: f64,
    /// Nonzero enables pruning of spurious components.
    pub pruning: i32,
    pub representation: IgmnRepresentation,
}

/// Opaque model handle.
pub struct IgmnModel {
    file: ModelFile,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> IgmnStatus {
    match err {
        Error::DimensionMismatch { .. } => IgmnStatus::DimensionMismatch,
        Error::SingularUpdate { .. } | Error::DegenerateComponent(_) | Error::SkippedUpdate { .. } => {
            IgmnStatus::Numerical
        }
        Error::Config(_) => IgmnStatus::InvalidArgument,
        Error::Io(_) => IgmnStatus::Io,
        Error::Parse { .. } | Error::ModelFormat(_) | Error::Csv(_) => IgmnStatus::Format,
    }
}

struct Fail(IgmnStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(IgmnStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into status codes.
fn guarded(f: impl FnOnce() -> Result<(), Fail>) -> IgmnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            IgmnStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&msg);
            IgmnStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn model_ref<'a>(m: *const IgmnModel) -> Result<&'a IgmnModel, Fail> {
    m.as_ref().ok_or_else(|| null("model"))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| Fail(IgmnStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn igmn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Writes the library defaults: delta 0.5, the smallest positive beta,
/// v_min 5, sp_min 3, pruning on, precision representation.
///
/// # Safety
///
/// `out` must be null or point to writable memory for one `IgmnConfig`.
#[no_mangle]
pub unsafe extern "C" fn igmn_config_default(out: *mut IgmnConfig) -> IgmnStatus {
    guarded(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let d = LearnerConfig::builder(&[1.0]).build()?;
        *out = IgmnConfig {
            delta: d.delta(),
            beta: d.beta(),
            v_min: d.v_min(),
            sp_min: d.sp_min(),
            pruning: i32::from(d.pruning()),
            representation: IgmnRepresentation::Precision,
        };
        Ok(())
    })
}

/// Creates an empty model of dimension `dim`. `dataset_std` holds the
/// per-dimension spread used to size new components.
///
/// # Safety
///
/// `dataset_std` must be null or valid for `dim` reads; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn igmn_model_new(
    config: *const IgmnConfig,
    dataset_std: *const f64,
    dim: usize,
    out: *mut *mut IgmnModel,
) -> IgmnStatus {
    guarded(|| {
        let cfg = config.as_ref().ok_or_else(|| null("config"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if dim == 0 {
            return Err(Fail(IgmnStatus::InvalidArgument, "dimension must be positive".into()));
        }
        let std = slice(dataset_std, dim, "dataset_std")?;
        let representation = match cfg.representation {
            IgmnRepresentation::Covariance => Representation::Covariance,
            IgmnRepresentation::Precision => Representation::Precision,
        };
        let config = LearnerConfig::builder(std)
            .delta(cfg.delta)
            .beta(cfg.beta)
            .v_min(cfg.v_min)
            .sp_min(cfg.sp_min)
            .pruning(cfg.pruning != 0)
            .representation(representation)
            .build()?;
        let model = IgmnModel {
            file: ModelFile::new(Mixture::new(config)),
        };
        *out = Box::into_raw(Box::new(model));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
///
/// `model` must be null or a live handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn igmn_model_free(model: *mut IgmnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Learns one data point of length `dim`.
///
/// # Safety
///
/// `model` must be a live handle; `x` must be valid for `len` reads.
#[no_mangle]
pub unsafe extern "C" fn igmn_model_learn(model: *mut IgmnModel, x: *const f64, len: usize) -> IgmnStatus {
    guarded(|| {
        let m = model.as_mut().ok_or_else(|| null("model"))?;
        let x = slice(x, len, "x")?;
        m.file.mixture.learn(x)?;
        Ok(())
    })
}

/// Learns `rows` points stored row-major, each of length `dim`.
///
/// # Safety
///
/// `model` must be a live handle; `data` must be valid for `rows * dim` reads.
#[no_mangle]
pub unsafe extern "C" fn igmn_model_learn_batch(
    model: *mut IgmnModel,
    data: *const f64,
    rows: usize,
    dim: usize,
) -> IgmnStatus {
    guarded(|| {
        let m = model.as_mut().ok_or_else(|| null("model"))?;
        let total = rows
            .checked_mul(dim)
            .ok_or_else(|| Fail(IgmnStatus::InvalidArgument, "rows * dim overflows".into()))?;
        let data = slice(data, total, "data")?;
        if dim != m.file.mixture.dim() {
            return Err(Error::DimensionMismatch {
                expected: m.file.mixture.dim(),
                actual: dim,
            }
            .into());
        }
        for row in data.chunks_exact(dim.max(1)) {
            m.file.mixture.learn(row)?;
        }
        Ok(())
    })
}

/// Predicts the dimensions listed in `targets` from the remaining ones.
///
/// `known` holds the non-target values in increasing dimension order.
/// `out_mean` receives `n_targets` values; `out_cov`, if not null, receives
/// the `n_targets * n_targets` mixture covariance, row-major.
///
/// # Safety
///
/// `model` must be a live handle and every buffer valid for the lengths given above.
#[no_mangle]
pub unsafe extern "C" fn igmn_model_predict(
    model: *const IgmnModel,
    targets: *const usize,
    n_targets: usize,
    known: *const f64,
    n_known: usize,
    out_mean: *mut f64,
    out_cov: *mut f64,
) -> IgmnStatus {
    guarded(|| {
        let m = model_ref(model)?;
        let targets = slice(targets, n_targets, "targets")?;
        let known = slice(known, n_known, "known")?;
        if out_mean.is_null() {
            return Err(null("out_mean"));
        }
        let part = Partition::with_targets(m.file.mixture.dim(), targets)?;
        let pred = m.file.mixture.predict(&part, known)?;
        std::slice::from_raw_parts_mut(out_mean, n_targets).copy_from_slice(pred.target_mean.as_slice());
        if !out_cov.is_null() {
            let cov = std::slice::from_raw_parts_mut(out_cov, n_targets * n_targets);
            for r in 0..n_targets {
                for c in 0..n_targets {
                    cov[r * n_targets + c] = pred.target_cov[(r, c)];
                }
            }
        }
        Ok(())
    })
}

/// Number of components currently in the model.
///
/// # Safety
///
/// `model` must be a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn igmn_model_component_count(model: *const IgmnModel, out: *mut usize) -> IgmnStatus {
    guarded(|| {
        let m = model_ref(model)?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.file.mixture.len();
        Ok(())
    })
}

/// Dimension of the model.
///
/// # Safety
///
/// `model` must be a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn igmn_model_dim(model: *const IgmnModel, out: *mut usize) -> IgmnStatus {
    guarded(|| {
        let m = model_ref(model)?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.file.mixture.dim();
        Ok(())
    })
}

/// Writes the model in the text format read by [`igmn_model_load`] and the
/// command-line tool.
///
/// # Safety
///
/// `model` must be a live handle; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn igmn_model_save(model: *const IgmnModel, path: *const c_char) -> IgmnStatus {
    guarded(|| {
        let m = model_ref(model)?;
        m.file.save(path_arg(path)?)?;
        Ok(())
    })
}

/// Reads a model written by [`igmn_model_save`] or the command-line tool.
///
/// # Safety
///
/// `path` must be a NUL-terminated string; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn igmn_model_load(path: *const c_char, out: *mut *mut IgmnModel) -> IgmnStatus {
    guarded(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let file = ModelFile::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(IgmnModel { file }));
        Ok(())
    })
}

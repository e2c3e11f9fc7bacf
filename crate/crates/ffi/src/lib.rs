//! C ABI over `sepred`.
//!
//! Every fallible function returns a [`SepredStatus`] and writes results
//! through out-pointers. Objects cross the boundary as opaque handles that
//! the caller releases with the matching `*_free` function. After a
//! non-`OK` status, [`sepred_last_error`] describes the failure on the
//! calling thread.
//!
//! Array arguments are row-major. Complex data is passed as separate real
//! and imaginary arrays of equal length.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sepred::channel::{generate_channel, load_dataset, ChannelObject, ScenarioConfig, ScenarioKind};
use sepred::features::{assemble, FeatureScheme, FeatureSpec};
use sepred::linalg::{CMatrix, Complex64};
use sepred::mimo::{ground_truth, DetectorKind, PrecoderKind};
use sepred::models::Model;
use sepred::{Error, ErrorClass};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SepredStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was out of range or an output buffer too small.
    InvalidArgument = 2,
    /// Configuration or model-family problem.
    Config = 3,
    /// Unreadable, corrupt or mis-shaped data, including I/O failures.
    Data = 4,
    /// Ill-conditioned or non-finite numerics.
    Numeric = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SepredScenario {
    Urban = 0,
    Rural = 1,
    Iid = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SepredPrecoder {
    Mrt = 0,
    Zf = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SepredDetector {
    Mmse = 0,
    Irc = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SepredScheme {
    Default = 0,
    Sorted = 1,
    /// Elementary symmetric polynomials; the degree is passed separately.
    Poly = 2,
}

/// One channel sample.
pub struct SepredChannel {
    inner: ChannelObject,
}

/// A trained predictor of any family.
pub struct SepredModel {
    inner: Model,
}

/// A loaded channel dataset.
pub struct SepredDataset {
    inner: Vec<ChannelObject>,
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SepredStatus {
    match e {
        Error::InvalidArgument(_) => SepredStatus::InvalidArgument,
        Error::Stage { source, .. } => status_of(source),
        _ => match e.class() {
            ErrorClass::Config => SepredStatus::Config,
            ErrorClass::Data => SepredStatus::Data,
            ErrorClass::Numeric => SepredStatus::Numeric,
        },
    }
}

/// Runs `f`, converting failures and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SepredStatus {
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return SepredStatus::Ok,
        Ok(Err(Fail::Null(what))) => (SepredStatus::NullPointer, format!("null pointer: {what}")),
        Ok(Err(Fail::Arg(m))) => (SepredStatus::InvalidArgument, m),
        Ok(Err(Fail::Core(e))) => (status_of(&e), e.to_string()),
        Err(p) => {
            let m = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            (SepredStatus::Panic, format!("panic: {m}"))
        }
    };
    set_last_error(msg);
    status
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn path_arg(p: *const c_char) -> Result<String, Fail> {
    if p.is_null() {
        return Err(Fail::Null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Fail::Arg("path is not valid UTF-8".into()))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message for the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sepred_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sepred_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Draws sample `index` of a scenario with `users` users.
///
/// # Safety
/// `out_channel` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sepred_channel_generate(
    scenario: SepredScenario,
    seed: u64,
    users: usize,
    index: u64,
    out_channel: *mut *mut SepredChannel,
) -> SepredStatus {
    guard(|| {
        let dst = out(out_channel, "out_channel")?;
        let kind = match scenario {
            SepredScenario::Urban => ScenarioKind::UrbanAnalog,
            SepredScenario::Rural => ScenarioKind::RuralAnalog,
            SepredScenario::Iid => ScenarioKind::Iid,
        };
        let obj = generate_channel(&ScenarioConfig::preset(kind, seed), users, index)?;
        *dst = boxed(SepredChannel { inner: obj });
        Ok(())
    })
}

/// Builds a channel from `users` matrices of shape `rx × tx`, stored
/// back-to-back in row-major order in `re` and `im`, each of length
/// `users * rx * tx`.
///
/// # Safety
/// `re` and `im` must point to that many readable doubles; `out_channel`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn sepred_channel_from_parts(
    users: usize,
    rx: usize,
    tx: usize,
    layers_per_user: usize,
    sigma2: f64,
    re: *const f64,
    im: *const f64,
    out_channel: *mut *mut SepredChannel,
) -> SepredStatus {
    guard(|| {
        let dst = out(out_channel, "out_channel")?;
        let n = users
            .checked_mul(rx)
            .and_then(|v| v.checked_mul(tx))
            .ok_or_else(|| Fail::Arg("channel dimensions overflow".into()))?;
        if n == 0 {
            return Err(Fail::Arg("channel dimensions must be positive".into()));
        }
        let (re, im) = (slice(re, n, "re")?, slice(im, n, "im")?);
        let mats = (0..users)
            .map(|k| {
                let base = k * rx * tx;
                CMatrix::from_fn(rx, tx, |i, j| {
                    let at = base + i * tx + j;
                    Complex64::new(re[at], im[at])
                })
            })
            .collect();
        let obj = ChannelObject::new(mats, layers_per_user, sigma2, "external")?;
        *dst = boxed(SepredChannel { inner: obj });
        Ok(())
    })
}

/// Releases a channel handle; null is ignored.
///
/// # Safety
/// `channel` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sepred_channel_free(channel: *mut SepredChannel) {
    if !channel.is_null() {
        drop(Box::from_raw(channel));
    }
}

/// Writes the number of users, receive antennas, transmit antennas and
/// layers per user. Any out-pointer may be null.
///
/// # Safety
/// `channel` must be a live handle; non-null out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn sepred_channel_shape(
    channel: *const SepredChannel,
    users: *mut usize,
    rx: *mut usize,
    tx: *mut usize,
    layers_per_user: *mut usize,
) -> SepredStatus {
    guard(|| {
        let c = &deref(channel, "channel")?.inner;
        for (p, v) in [
            (users, c.num_users()),
            (rx, c.rx_antennas()),
            (tx, c.tx_antennas()),
            (layers_per_user, c.layers_per_user),
        ] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Noise variance of the channel.
///
/// # Safety
/// `channel` must be a live handle and `sigma2` writable.
#[no_mangle]
pub unsafe extern "C" fn sepred_channel_sigma2(channel: *const SepredChannel, sigma2: *mut f64) -> SepredStatus {
    guard(|| {
        *out(sigma2, "sigma2")? = deref(channel, "channel")?.inner.sigma2;
        Ok(())
    })
}

/// Ground-truth SE. Writes the average to `se_avg` and, when `se_user` is
/// non-null, one value per user; `se_user_len` must then be at least the
/// number of users.
///
/// # Safety
/// `channel` must be a live handle; `se_avg` writable; `se_user` null or
/// writable for `se_user_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sepred_spectral_efficiency(
    channel: *const SepredChannel,
    precoder: SepredPrecoder,
    detector: SepredDetector,
    se_avg: *mut f64,
    se_user: *mut f64,
    se_user_len: usize,
) -> SepredStatus {
    guard(|| {
        let c = &deref(channel, "channel")?.inner;
        let avg = out(se_avg, "se_avg")?;
        if !se_user.is_null() && se_user_len < c.num_users() {
            return Err(Fail::Arg(format!(
                "se_user holds {se_user_len} values, need {}",
                c.num_users()
            )));
        }
        let p = match precoder {
            SepredPrecoder::Mrt => PrecoderKind::Mrt,
            SepredPrecoder::Zf => PrecoderKind::Zf,
        };
        let d = match detector {
            SepredDetector::Mmse => DetectorKind::Mmse,
            SepredDetector::Irc => DetectorKind::MmseIrc,
        };
        let r = ground_truth(c, p, d)?;
        *avg = r.se_avg;
        if !se_user.is_null() {
            std::slice::from_raw_parts_mut(se_user, r.se_user.len()).copy_from_slice(&r.se_user);
        }
        Ok(())
    })
}

/// Single-user SINR proxy of the channel.
///
/// # Safety
/// `channel` must be a live handle and `value` writable.
#[no_mangle]
pub unsafe extern "C" fn sepred_susinr(channel: *const SepredChannel, value: *mut f64) -> SepredStatus {
    guard(|| {
        let c = &deref(channel, "channel")?.inner;
        let dst = out(value, "value")?;
        *dst = sepred::features::extract_raw(c)?.susinr(c.sigma2)?;
        Ok(())
    })
}

/// Average-SE feature vector. `poly_degree` is used only with
/// `SEPRED_SCHEME_POLY`. The required length is always written to
/// `written`; if `out_features` is null or `capacity` is too small the call
/// returns `SEPRED_STATUS_INVALID_ARGUMENT` without writing features.
///
/// # Safety
/// `channel` must be a live handle, `written` writable and `out_features`
/// null or writable for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn sepred_features(
    channel: *const SepredChannel,
    scheme: SepredScheme,
    poly_degree: usize,
    include_susinr: bool,
    include_sigma2: bool,
    out_features: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> SepredStatus {
    guard(|| {
        let c = &deref(channel, "channel")?.inner;
        let n_out = out(written, "written")?;
        let scheme = match scheme {
            SepredScheme::Default => FeatureScheme::Default,
            SepredScheme::Sorted => FeatureScheme::Sorted,
            SepredScheme::Poly => FeatureScheme::Poly(poly_degree),
        };
        let spec = FeatureSpec::new(scheme)
            .with_susinr(include_susinr)
            .with_sigma2(include_sigma2);
        let x = assemble(c, &spec)?;
        *n_out = x.len();
        if out_features.is_null() || capacity < x.len() {
            return Err(Fail::Arg(format!(
                "feature buffer holds {capacity} values, need {}",
                x.len()
            )));
        }
        std::slice::from_raw_parts_mut(out_features, x.len()).copy_from_slice(&x);
        Ok(())
    })
}

/// Loads a model file of any family.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_model` writable.
#[no_mangle]
pub unsafe extern "C" fn sepred_model_load(path: *const c_char, out_model: *mut *mut SepredModel) -> SepredStatus {
    guard(|| {
        let dst = out(out_model, "out_model")?;
        let m = Model::load(path_arg(path)?)?;
        *dst = boxed(SepredModel { inner: m });
        Ok(())
    })
}

/// Releases a model handle; null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sepred_model_free(model: *mut SepredModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of input features the model expects.
///
/// # Safety
/// `model` must be a live handle and `n` writable.
#[no_mangle]
pub unsafe extern "C" fn sepred_model_n_features(model: *const SepredModel, n: *mut usize) -> SepredStatus {
    guard(|| {
        *out(n, "n")? = deref(model, "model")?.inner.n_features();
        Ok(())
    })
}

/// Predicts one row of `len` features.
///
/// # Safety
/// `model` must be a live handle, `features` readable for `len` doubles and
/// `prediction` writable.
#[no_mangle]
pub unsafe extern "C" fn sepred_model_predict(
    model: *const SepredModel,
    features: *const f64,
    len: usize,
    prediction: *mut f64,
) -> SepredStatus {
    guard(|| {
        let m = &deref(model, "model")?.inner;
        let dst = out(prediction, "prediction")?;
        *dst = m.predict_row(slice(features, len, "features")?)?;
        Ok(())
    })
}

/// Loads a channel dataset file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_dataset` writable.
#[no_mangle]
pub unsafe extern "C" fn sepred_dataset_load(
    path: *const c_char,
    out_dataset: *mut *mut SepredDataset,
) -> SepredStatus {
    guard(|| {
        let dst = out(out_dataset, "out_dataset")?;
        let objects = load_dataset(path_arg(path)?)?;
        *dst = boxed(SepredDataset { inner: objects });
        Ok(())
    })
}

/// Number of channels in the dataset.
///
/// # Safety
/// `dataset` must be a live handle and `len` writable.
#[no_mangle]
pub unsafe extern "C" fn sepred_dataset_len(dataset: *const SepredDataset, len: *mut usize) -> SepredStatus {
    guard(|| {
        *out(len, "len")? = deref(dataset, "dataset")?.inner.len();
        Ok(())
    })
}

/// Copies channel `index` into a new handle owned by the caller.
///
/// # Safety
/// `dataset` must be a live handle and `out_channel` writable.
#[no_mangle]
pub unsafe extern "C" fn sepred_dataset_get(
    dataset: *const SepredDataset,
    index: usize,
    out_channel: *mut *mut SepredChannel,
) -> SepredStatus {
    guard(|| {
        let ds = &deref(dataset, "dataset")?.inner;
        let dst = out(out_channel, "out_channel")?;
        let obj = ds
            .get(index)
            .ok_or_else(|| Fail::Arg(format!("index {index} out of range for {} channels", ds.len())))?;
        *dst = boxed(SepredChannel { inner: obj.clone() });
        Ok(())
    })
}

/// Releases a dataset handle; null is ignored.
///
/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sepred_dataset_free(dataset: *mut SepredDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

//! C ABI over `ced-core`.
//!
//! Every fallible function returns a [`CedStatus`]; on failure the message
//! is available from [`ced_last_error_message`] on the same thread. Frame
//! matrices are row-major `frames × dim` arrays of `double`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use ced_core::corpus::{Direction, FeatureSequence, TurnPair};
use ced_core::entrainment;
use ced_core::model::{load_checkpoint, CedModel, ModelConfig};
use ced_core::nn::Mat;
use ced_core::CedError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CedStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Checkpoint = 4,
    Dimension = 5,
    InputTooShort = 6,
    Numeric = 7,
    InsufficientData = 8,
    UndefinedCorrelation = 9,
    Panic = 10,
}

/// Opaque model handle.
pub struct CedModelHandle {
    model: CedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &CedError) -> CedStatus {
    match err {
        CedError::Io { .. } => CedStatus::Io,
        CedError::Checkpoint(_) => CedStatus::Checkpoint,
        CedError::Dimension(_) => CedStatus::Dimension,
        CedError::InputTooShort(_) => CedStatus::InputTooShort,
        CedError::Numeric(_) => CedStatus::Numeric,
        CedError::InsufficientData(_) => CedStatus::InsufficientData,
        CedError::UndefinedCorrelation(_) => CedStatus::UndefinedCorrelation,
        _ => CedStatus::InvalidArgument,
    }
}

struct Fail(CedStatus, String);

impl From<CedError> for Fail {
    fn from(e: CedError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CedStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CedStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CedStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CedStatus::Panic
        }
    }
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn model_ref<'a>(handle: *const CedModelHandle) -> Result<&'a CedModel, Fail> {
    handle.as_ref().map(|h| &h.model).ok_or_else(|| null("model"))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    *out = value;
    Ok(())
}

fn sequence(data: &[f64], frames: usize, dim: usize, turn_index: usize) -> Result<Arc<FeatureSequence>, Fail> {
    if frames.checked_mul(dim) != Some(data.len()) || dim == 0 {
        return Err(Fail(CedStatus::InvalidArgument, format!("{frames} frames × dim {dim} does not match buffer")));
    }
    let frames = Mat::from_shape_vec((frames, dim), data.to_vec()).expect("shape checked");
    Ok(Arc::new(FeatureSequence { session_id: String::new(), turn_index, frames, frame_period: 0.0 }))
}

/// Builds a pair from caller buffers of `lead_frames × dim` and `resp_frames × dim`.
unsafe fn pair(
    lead: *const f64,
    lead_frames: usize,
    resp: *const f64,
    resp_frames: usize,
    dim: usize,
) -> Result<TurnPair, Fail> {
    let lead = slice(lead, lead_frames.saturating_mul(dim), "lead")?;
    let resp = slice(resp, resp_frames.saturating_mul(dim), "resp")?;
    Ok(TurnPair {
        session_id: String::new(),
        pair_index: 0,
        leading_slot: 0,
        leading: sequence(lead, lead_frames, dim, 0)?,
        responding: sequence(resp, resp_frames, dim, 1)?,
        direction: Direction::new("lead", "resp"),
    })
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ced_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Loads a checkpoint file. The handle must be released with [`ced_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ced_model_load(path: *const c_char, out: *mut *mut CedModelHandle) -> CedStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Fail(CedStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let model = load_checkpoint(Path::new(path))?;
        write_out(out, Box::into_raw(Box::new(CedModelHandle { model })), "out")
    })
}

/// Builds a freshly initialised model from a JSON model config (NULL or
/// `"{}"` for defaults).
///
/// # Safety
/// `config_json` must be NULL or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ced_model_new(config_json: *const c_char, out: *mut *mut CedModelHandle) -> CedStatus {
    guard(|| {
        let cfg: ModelConfig = if config_json.is_null() {
            ModelConfig::default()
        } else {
            let text = CStr::from_ptr(config_json)
                .to_str()
                .map_err(|_| Fail(CedStatus::InvalidArgument, "config is not UTF-8".into()))?;
            serde_json::from_str(text).map_err(|e| Fail(CedStatus::InvalidArgument, format!("config: {e}")))?
        };
        let model = CedModel::new(cfg)?;
        write_out(out, Box::into_raw(Box::new(CedModelHandle { model })), "out")
    })
}

/// # Safety
/// `handle` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ced_model_free(handle: *mut CedModelHandle) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// # Safety
/// `handle` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ced_model_param_count(handle: *const CedModelHandle, out: *mut usize) -> CedStatus {
    guard(|| write_out(out, model_ref(handle)?.param_count(), "out"))
}

/// Feature dimension the model expects.
///
/// # Safety
/// `handle` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ced_model_input_dim(handle: *const CedModelHandle, out: *mut usize) -> CedStatus {
    guard(|| write_out(out, model_ref(handle)?.config().input_dim, "out"))
}

/// Length of each pooled embedding.
///
/// # Safety
/// `handle` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ced_model_embedding_dim(handle: *const CedModelHandle, out: *mut usize) -> CedStatus {
    guard(|| write_out(out, model_ref(handle)?.config().transformer_units, "out"))
}

/// Real/fake logit of a turn pair (positive means "real").
///
/// # Safety
/// `lead` and `resp` must hold `frames × dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ced_pair_logit(
    handle: *const CedModelHandle,
    lead: *const f64,
    lead_frames: usize,
    resp: *const f64,
    resp_frames: usize,
    dim: usize,
    out: *mut f64,
) -> CedStatus {
    guard(|| {
        let model = model_ref(handle)?;
        let p = pair(lead, lead_frames, resp, resp_frames, dim)?;
        write_out(out, model.classify_pair(&p)?, "out")
    })
}

/// CED of a turn pair with smooth-L1 transition `beta`.
///
/// # Safety
/// As [`ced_pair_logit`].
#[no_mangle]
pub unsafe extern "C" fn ced_pair_distance(
    handle: *const CedModelHandle,
    lead: *const f64,
    lead_frames: usize,
    resp: *const f64,
    resp_frames: usize,
    dim: usize,
    beta: f64,
    out: *mut f64,
) -> CedStatus {
    guard(|| {
        let model = model_ref(handle)?;
        let p = pair(lead, lead_frames, resp, resp_frames, dim)?;
        write_out(out, entrainment::ced_pair(model, &p, beta)?, "out")
    })
}

/// Pooled cross-encoder embeddings of both turns; each output buffer must
/// hold `len` doubles, where `len` equals the embedding dimension.
///
/// # Safety
/// As [`ced_pair_logit`]; `pooled_lead` and `pooled_resp` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ced_pair_embeddings(
    handle: *const CedModelHandle,
    lead: *const f64,
    lead_frames: usize,
    resp: *const f64,
    resp_frames: usize,
    dim: usize,
    pooled_lead: *mut f64,
    pooled_resp: *mut f64,
    len: usize,
) -> CedStatus {
    guard(|| {
        let model = model_ref(handle)?;
        if pooled_lead.is_null() || pooled_resp.is_null() {
            return Err(null("output buffer"));
        }
        let want = model.config().transformer_units;
        if len != want {
            return Err(Fail(CedStatus::Dimension, format!("output length {len}, embeddings have {want}")));
        }
        let p = pair(lead, lead_frames, resp, resp_frames, dim)?;
        let e = entrainment::extract_embeddings(model, &p)?;
        std::slice::from_raw_parts_mut(pooled_lead, len).copy_from_slice(e.pooled_lead.as_slice().expect("contiguous"));
        std::slice::from_raw_parts_mut(pooled_resp, len).copy_from_slice(e.pooled_resp.as_slice().expect("contiguous"));
        Ok(())
    })
}

/// # Safety
/// `u` and `v` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ced_smooth_l1(u: *const f64, v: *const f64, len: usize, beta: f64, out: *mut f64) -> CedStatus {
    guard(|| {
        let u = ndarray::ArrayView1::from(slice(u, len, "u")?);
        let v = ndarray::ArrayView1::from(slice(v, len, "v")?);
        write_out(out, entrainment::smooth_l1(u, v, beta)?, "out")
    })
}

/// Pearson r and its two-sided p-value.
///
/// # Safety
/// `xs` and `ys` must hold `len` doubles; `rho` and `p_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ced_pearson(
    xs: *const f64,
    ys: *const f64,
    len: usize,
    rho: *mut f64,
    p_value: *mut f64,
) -> CedStatus {
    guard(|| {
        let (r, p) = ced_core::analysis::pearson(slice(xs, len, "xs")?, slice(ys, len, "ys")?)?;
        write_out(rho, r, "rho")?;
        write_out(p_value, p, "p_value")
    })
}

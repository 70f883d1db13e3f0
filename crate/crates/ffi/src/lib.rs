//! C ABI over the har-fusion library.
//!
//! Every function returns an [`HfStatus`]; on failure a description is
//! available from [`hf_last_error`] on the same thread. Models are opaque
//! handles created by [`hf_model_load`] and released by [`hf_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use har_fusion::fusion::{evaluate, fuse, FusionMethod, ScoreMatrix};
use har_fusion::models::StreamModel;
use har_fusion::nn::Mode;
use har_fusion::preprocess::{normalize_keypoints, window_count, Joint, KeypointFrame, WindowSpec, JOINTS, POSE_FEATURES};
use har_fusion::tensor::Tensor;
use har_fusion::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Validation = 4,
    State = 5,
    Config = 6,
    Io = 7,
    Checkpoint = 8,
    Mode = 9,
    /// No output: for example a keypoint frame with too few confident joints.
    NoResult = 10,
    /// A panic was caught at the boundary.
    Internal = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HfFusion {
    Average = 0,
    Max = 1,
}

/// Summary metrics over one prediction set.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HfMetrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

/// Opaque trained stream model.
pub struct HfModel {
    inner: StreamModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> HfStatus {
    match e {
        Error::Dimension { .. } | Error::Alignment(_) => HfStatus::Dimension,
        Error::Validation(_) | Error::Divergence { .. } | Error::Sync(_) => HfStatus::Validation,
        Error::State(_) => HfStatus::State,
        Error::Config(_) => HfStatus::Config,
        Error::Io { .. } | Error::Parse { .. } | Error::Report(_) => HfStatus::Io,
        Error::Checkpoint(_) | Error::Json(_) => HfStatus::Checkpoint,
        Error::Mode(_) => HfStatus::Mode,
    }
}

fn fail(status: HfStatus, msg: &str) -> HfStatus {
    set_error(msg);
    status
}

/// Runs `body`, recording errors and turning panics into `Internal`.
fn guard(body: impl FnOnce() -> Result<(), HfStatus>) -> HfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            HfStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => fail(HfStatus::Internal, "panic inside har-fusion"),
    }
}

fn lib(e: Error) -> HfStatus {
    fail(status_of(&e), &e.to_string())
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), HfStatus> {
    if p.is_null() {
        Err(fail(HfStatus::NullPointer, &format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// Borrows `len` values at `p`; a zero length accepts any pointer.
unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], HfStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    // SAFETY: caller guarantees `p` points to `len` readable values.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], HfStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    non_null(p, name)?;
    // SAFETY: caller guarantees `p` points to `len` writable values.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn hf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a checkpoint manifest (`best.json` / `final.json`) into a new
/// model in inference mode.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_model_load(path: *const c_char, out: *mut *mut HfModel) -> HfStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(out, "out")?;
        // SAFETY: checked non-null; caller guarantees NUL termination.
        let path = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| fail(HfStatus::InvalidArgument, "path is not UTF-8"))?;
        let mut inner = StreamModel::load(Path::new(path)).map_err(lib)?;
        inner.set_mode(Mode::Eval);
        // SAFETY: `out` checked non-null above.
        unsafe { *out = Box::into_raw(Box::new(HfModel { inner })) };
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`hf_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hf_model_free(model: *mut HfModel) {
    if !model.is_null() {
        // SAFETY: pointer produced by Box::into_raw in hf_model_load.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Reports the input geometry and class count of a model. Any output
/// pointer may be null.
///
/// # Safety
/// `model` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_model_shape(
    model: *const HfModel,
    n_classes: *mut usize,
    window_len: *mut usize,
    features: *mut usize,
) -> HfStatus {
    guard(|| {
        non_null(model, "model")?;
        // SAFETY: checked non-null; caller guarantees a live handle.
        let spec = &unsafe { &*model }.inner.spec;
        for (p, v) in [(n_classes, spec.n_classes), (window_len, spec.window_len), (features, spec.features)] {
            if !p.is_null() {
                // SAFETY: caller guarantees non-null outputs are writable.
                unsafe { *p = v };
            }
        }
        Ok(())
    })
}

/// Scores `n` windows laid out `[n x window_len x features]` into
/// `scores` (`[n x n_classes]`, `scores_len` values).
///
/// # Safety
/// `x` must hold `n * window_len * features` values; `scores` must hold
/// `scores_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn hf_model_predict(
    model: *const HfModel,
    x: *const f64,
    n: usize,
    scores: *mut f64,
    scores_len: usize,
) -> HfStatus {
    guard(|| {
        non_null(model, "model")?;
        // SAFETY: checked non-null; caller guarantees a live handle.
        let m = &unsafe { &*model }.inner;
        let (t, f, c) = (m.spec.window_len, m.spec.features, m.spec.n_classes);
        if n == 0 {
            return Err(fail(HfStatus::InvalidArgument, "n must be positive"));
        }
        if scores_len != n * c {
            return Err(fail(
                HfStatus::Dimension,
                &format!("scores buffer holds {scores_len} values, need {}", n * c),
            ));
        }
        // SAFETY: lengths documented in the contract above.
        let input = unsafe { slice(x, n * t * f, "x") }?;
        let out = unsafe { slice_mut(scores, scores_len, "scores") }?;
        let tensor = Tensor::new(vec![n, t, f], input.to_vec()).map_err(lib)?;
        let probs = m.predict_scores(&tensor).map_err(lib)?;
        out.copy_from_slice(probs.data());
        Ok(())
    })
}

/// Fuses the score rows of one sample (`n_streams` rows of `n_classes`
/// probabilities, row-major) and writes the winning class.
///
/// # Safety
/// `scores` must hold `n_streams * n_classes` values; `class_out` writable.
#[no_mangle]
pub unsafe extern "C" fn hf_fuse(
    scores: *const f64,
    n_streams: usize,
    n_classes: usize,
    method: HfFusion,
    class_out: *mut usize,
) -> HfStatus {
    guard(|| {
        non_null(class_out, "class_out")?;
        if n_streams == 0 || n_classes == 0 {
            return Err(fail(HfStatus::InvalidArgument, "need at least one stream and one class"));
        }
        // SAFETY: length documented above.
        let data = unsafe { slice(scores, n_streams * n_classes, "scores") }?;
        let matrix = ScoreMatrix::new(data.chunks(n_classes).map(<[f64]>::to_vec).collect()).map_err(lib)?;
        let method = match method {
            HfFusion::Average => FusionMethod::Average,
            HfFusion::Max => FusionMethod::Max,
        };
        // SAFETY: checked non-null.
        unsafe { *class_out = fuse(&matrix, method) };
        Ok(())
    })
}

/// Accuracy and macro precision, recall and F1 of `n` predictions.
/// `confusion`, if not null, receives `n_classes * n_classes` counts
/// indexed by (true, predicted).
///
/// # Safety
/// `predictions` and `labels` must hold `n` values; `out` must be writable;
/// a non-null `confusion` must hold `n_classes * n_classes` values.
#[no_mangle]
pub unsafe extern "C" fn hf_evaluate(
    predictions: *const usize,
    labels: *const usize,
    n: usize,
    n_classes: usize,
    out: *mut HfMetrics,
    confusion: *mut u64,
) -> HfStatus {
    guard(|| {
        non_null(out, "out")?;
        // SAFETY: lengths documented above.
        let preds = unsafe { slice(predictions, n, "predictions") }?;
        let truth = unsafe { slice(labels, n, "labels") }?;
        let (report, cm) = evaluate(preds, truth, n_classes).map_err(lib)?;
        if !confusion.is_null() {
            // SAFETY: non-null confusion holds n_classes^2 values.
            let dst = unsafe { slice_mut(confusion, n_classes * n_classes, "confusion") }?;
            for (d, v) in dst.iter_mut().zip(cm.counts.iter().flatten()) {
                *d = *v;
            }
        }
        // SAFETY: checked non-null.
        unsafe {
            *out = HfMetrics {
                accuracy: report.accuracy,
                macro_precision: report.macro_precision,
                macro_recall: report.macro_recall,
                macro_f1: report.macro_f1,
            }
        };
        Ok(())
    })
}

/// Number of sliding windows over `n` samples.
///
/// # Safety
/// `count_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_window_count(n: usize, window_len: usize, overlap: usize, count_out: *mut usize) -> HfStatus {
    guard(|| {
        non_null(count_out, "count_out")?;
        let spec = WindowSpec::new(window_len, overlap).map_err(lib)?;
        // SAFETY: checked non-null.
        unsafe { *count_out = window_count(n, spec) };
        Ok(())
    })
}

/// Normalizes one person's 25 joints (`x, y, confidence` triples, 75
/// values) into 50 model features. Returns `NoResult` when fewer than two
/// joints are confident.
///
/// # Safety
/// `joints` must hold 75 values and `features` 50 writable values.
#[no_mangle]
pub unsafe extern "C" fn hf_normalize_keypoints(joints: *const f64, features: *mut f64) -> HfStatus {
    guard(|| {
        // SAFETY: fixed lengths documented above.
        let raw = unsafe { slice(joints, 3 * JOINTS, "joints") }?;
        let out = unsafe { slice_mut(features, POSE_FEATURES, "features") }?;
        let frame = KeypointFrame::new(0.0, raw.chunks(3).map(|j| Joint::new(j[0], j[1], j[2])).collect()).map_err(lib)?;
        match normalize_keypoints(&frame) {
            Some(v) => {
                out.copy_from_slice(&v);
                Ok(())
            }
            None => Err(fail(HfStatus::NoResult, "fewer than two confident joints")),
        }
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hf_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

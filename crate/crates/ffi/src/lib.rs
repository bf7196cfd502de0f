//! C interface to `adhoc-sv`.
//!
//! Objects cross the boundary as opaque handles created by `*_load` /
//! `*_from_*` functions and released with the matching `*_free`. Every
//! fallible call returns an [`AdhocStatus`]; on failure a description is
//! available from [`adhoc_last_error`] until the next failing call on the
//! same thread. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use adhoc_sv::graphs::{apply_noise_mask, apply_orientation_mask, build_prior};
use adhoc_sv::trainer::{compute_eer, cosine_score, load_checkpoint, Model};
use adhoc_sv::{Error, FrameTensor, Scene};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdhocStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Numeric = 4,
    Io = 5,
    Data = 6,
    Config = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Per-channel frame features, `C x T x D`.
pub struct AdhocFeatures(FrameTensor);

/// Room geometry for one utterance.
pub struct AdhocScene(Scene);

/// Trained model loaded from a checkpoint directory.
pub struct AdhocModel(Model);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> AdhocStatus {
    match e {
        Error::Dimension(_) | Error::IndexOutOfRange { .. } => AdhocStatus::Dimension,
        Error::NonFinite(_) | Error::DegenerateProjection | Error::ZeroVector | Error::EmptyNeighborhood { .. } => {
            AdhocStatus::Numeric
        }
        Error::Io(_) => AdhocStatus::Io,
        Error::Config(_) | Error::MissingPrior => AdhocStatus::Config,
        Error::Range(_) | Error::EmptyGraph => AdhocStatus::InvalidArgument,
        _ => AdhocStatus::Data,
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (AdhocStatus, String)>) -> AdhocStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AdhocStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            AdhocStatus::Panic
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (AdhocStatus, String)>;
}

impl<T> IntoFfi<T> for adhoc_sv::Result<T> {
    fn ffi(self) -> Result<T, (AdhocStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (AdhocStatus, String) {
    (AdhocStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (AdhocStatus, String) {
    (AdhocStatus::InvalidArgument, msg.into())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (AdhocStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, (AdhocStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (AdhocStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), (AdhocStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message for the most recent failure on this thread, or null.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn adhoc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn adhoc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads an ADHC feature file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn adhoc_features_load(path: *const c_char, out: *mut *mut AdhocFeatures) -> AdhocStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let x = FrameTensor::load(Path::new(path)).ffi()?;
        put(out, Box::into_raw(Box::new(AdhocFeatures(x))), "out")
    })
}

/// Copies `c * t * d` floats laid out channel-major (`[c][t][d]`).
///
/// # Safety
/// `data` must point to `len` readable floats and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adhoc_features_from_f32(
    c: usize,
    t: usize,
    d: usize,
    data: *const f32,
    len: usize,
    out: *mut *mut AdhocFeatures,
) -> AdhocStatus {
    guard(|| {
        let values = slice_arg(data, len, "data")?;
        let x = FrameTensor::new(c, t, d, values.iter().map(|&v| f64::from(v)).collect()).ffi()?;
        put(out, Box::into_raw(Box::new(AdhocFeatures(x))), "out")
    })
}

/// # Safety
/// `features` must be a live handle; the output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn adhoc_features_dims(
    features: *const AdhocFeatures,
    c: *mut usize,
    t: *mut usize,
    d: *mut usize,
) -> AdhocStatus {
    guard(|| {
        let x = &ref_arg(features, "features")?.0;
        put(c, x.c(), "c")?;
        put(t, x.t(), "t")?;
        put(d, x.d(), "d")
    })
}

/// # Safety
/// `features` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn adhoc_features_free(features: *mut AdhocFeatures) {
    if !features.is_null() {
        drop(Box::from_raw(features));
    }
}

/// Parses and validates a scene JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn adhoc_scene_from_json(json: *const c_char, out: *mut *mut AdhocScene) -> AdhocStatus {
    guard(|| {
        let scene = Scene::from_json(str_arg(json, "json")?).ffi()?;
        put(out, Box::into_raw(Box::new(AdhocScene(scene))), "out")
    })
}

/// # Safety
/// `scene` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn adhoc_scene_num_nodes(scene: *const AdhocScene, out: *mut usize) -> AdhocStatus {
    guard(|| put(out, ref_arg(scene, "scene")?.0.n_nodes(), "out"))
}

/// # Safety
/// `scene` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn adhoc_scene_free(scene: *mut AdhocScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Loads a model from a checkpoint directory.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn adhoc_model_load(dir: *const c_char, out: *mut *mut AdhocModel) -> AdhocStatus {
    guard(|| {
        let (model, _) = load_checkpoint(Path::new(str_arg(dir, "dir")?)).ffi()?;
        put(out, Box::into_raw(Box::new(AdhocModel(model))), "out")
    })
}

/// Length of the utterance embedding produced by [`adhoc_model_embed`].
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn adhoc_model_embedding_dim(model: *const AdhocModel, out: *mut usize) -> AdhocStatus {
    guard(|| put(out, ref_arg(model, "model")?.0.config.d, "out"))
}

/// Writes the utterance embedding into `out[0..out_len]`.
///
/// `scene` may be null unless the model selects channels from geometry.
///
/// # Safety
/// `model` and `features` must be live handles, `scene` null or live, and
/// `out` must have room for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn adhoc_model_embed(
    model: *const AdhocModel,
    features: *const AdhocFeatures,
    scene: *const AdhocScene,
    out: *mut f64,
    out_len: usize,
) -> AdhocStatus {
    guard(|| {
        let model = &ref_arg(model, "model")?.0;
        let x = &ref_arg(features, "features")?.0;
        let scene = scene.as_ref().map(|s| &s.0);
        let e = model.embed(x, scene).ffi()?;
        if out.is_null() {
            return Err(null("out"));
        }
        if out_len < e.s.len() {
            return Err((AdhocStatus::BufferTooSmall, format!("need {} values, got {out_len}", e.s.len())));
        }
        slice::from_raw_parts_mut(out, e.s.len()).copy_from_slice(&e.s);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn adhoc_model_free(model: *mut AdhocModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Cosine similarity of two vectors of length `len`.
///
/// # Safety
/// `a` and `b` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adhoc_cosine_score(a: *const f64, b: *const f64, len: usize, out: *mut f64) -> AdhocStatus {
    guard(|| {
        let s = cosine_score(slice_arg(a, len, "a")?, slice_arg(b, len, "b")?).ffi()?;
        put(out, s, "out")
    })
}

/// Equal error rate of `n` scored trials; `labels[i]` is nonzero for target trials.
///
/// # Safety
/// `scores` and `labels` must point to `n` elements; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn adhoc_compute_eer(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    eer: *mut f64,
    threshold: *mut f64,
) -> AdhocStatus {
    guard(|| {
        let scores = slice_arg(scores, n, "scores")?;
        let labels: Vec<bool> = slice_arg(labels, n, "labels")?.iter().map(|&l| l != 0).collect();
        let r = compute_eer(scores, &labels).ffi()?;
        put(eer, r.eer, "eer")?;
        put(threshold, r.threshold, "threshold")
    })
}

/// Distance-ratio channel selection: `out[i]` is 1 when node `i` is kept.
///
/// `orientation` nonzero also drops nodes behind the speaker; a positive
/// `rho_noise` also drops nodes near the noise source.
///
/// # Safety
/// `scene` must be a live handle and `out` must have room for `out_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn adhoc_prior_mask(
    scene: *const AdhocScene,
    rho: f64,
    orientation: u8,
    rho_noise: f64,
    out: *mut u8,
    out_len: usize,
) -> AdhocStatus {
    guard(|| {
        let scene = &ref_arg(scene, "scene")?.0;
        let (_, mut mask) = build_prior(scene, rho).ffi()?;
        if orientation != 0 {
            mask = apply_orientation_mask(&mask, scene).ffi()?;
        }
        if rho_noise > 0.0 {
            mask = apply_noise_mask(&mask, scene, rho_noise).ffi()?;
        }
        if out.is_null() {
            return Err(null("out"));
        }
        if out_len < mask.len() {
            return Err((AdhocStatus::BufferTooSmall, format!("need {} bytes, got {out_len}", mask.len())));
        }
        slice::from_raw_parts_mut(out, mask.len()).copy_from_slice(&mask.to_bits());
        Ok(())
    })
}

//! C ABI over the pfca engine: opaque model handles, status codes, and a
//! thread-local last-error message. All functions are panic-safe; pointers
//! must be valid for the documented lengths.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use pfca_core::attention::AttentionKind;
use pfca_core::cost::count_flops;
use pfca_core::error::Error;
use pfca_core::metrics::{psnr, ssim, ImagePlane};
use pfca_core::models::{Model, ModelSpec, StemKind};
use pfca_core::tensor::{Mode, Shape, Tensor};
use pfca_core::train::load_checkpoint;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfcaStatus {
    Ok = 0,
    /// Bad argument: null pointer, unknown name, malformed shape.
    InvalidArgument = 1,
    /// Numerical failure (non-finite values).
    Numeric = 2,
    /// Valid request the build does not support.
    Unsupported = 3,
    /// I/O or file-format failure.
    Io = 4,
    /// Internal error; consult `pfca_last_error`.
    Internal = 5,
}

/// Opaque model handle.
pub struct PfcaModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_for(err: &Error) -> PfcaStatus {
    match err {
        Error::Config(_)
        | Error::InvalidShape(_)
        | Error::ShapeMismatch(_)
        | Error::ChannelMismatch { .. }
        | Error::UnknownParam(_)
        | Error::LabelOutOfRange { .. } => PfcaStatus::InvalidArgument,
        Error::NonFinite(_) | Error::NonFiniteLoss { .. } => PfcaStatus::Numeric,
        Error::UnsupportedModel(_) | Error::NoRunningStats => PfcaStatus::Unsupported,
        Error::Io(_) | Error::Format { .. } | Error::Png(_) | Error::Data(_) => PfcaStatus::Io,
        _ => PfcaStatus::Internal,
    }
}

fn guard<F: FnOnce() -> PfcaStatus>(f: F) -> PfcaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("panic inside pfca");
            PfcaStatus::Internal
        }
    }
}

/// Copies the message of the most recent error on this thread into `buf`
/// (NUL-terminated, truncated to `len`); returns the full message length.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be null (query mode).
#[no_mangle]
pub unsafe extern "C" fn pfca_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pfca_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok()
}

fn parse_attention(name: &str) -> Option<AttentionKind> {
    match name {
        "none" => Some(AttentionKind::None),
        "pfca" => Some(AttentionKind::pfca()),
        "ca" => Some(AttentionKind::ca()),
        "pa" => Some(AttentionKind::Pa),
        _ => None,
    }
}

fn spec_for(family: &str, attention: AttentionKind) -> Option<ModelSpec> {
    match family {
        "msrresnet" => Some(ModelSpec::msrresnet(attention)),
        "resnet18" => Some(ModelSpec::resnet(18, 1000, StemKind::ImageNet, attention)),
        "resnet50" => Some(ModelSpec::resnet(50, 1000, StemKind::ImageNet, attention)),
        "resnet101" => Some(ModelSpec::resnet(101, 1000, StemKind::ImageNet, attention)),
        _ => None,
    }
}

/// Builds a freshly initialized model. `family` is one of msrresnet,
/// resnet18, resnet50, resnet101; `attention` one of none, pfca, ca, pa.
///
/// # Safety
/// `family` and `attention` must be NUL-terminated strings; `out` must be
/// a valid pointer. A non-null result handle must be released with
/// `pfca_model_free`.
#[no_mangle]
pub unsafe extern "C" fn pfca_model_new(
    family: *const c_char,
    attention: *const c_char,
    seed: u64,
    out: *mut *mut PfcaModel,
) -> PfcaStatus {
    guard(|| {
        if out.is_null() {
            set_error("out handle pointer is null");
            return PfcaStatus::InvalidArgument;
        }
        let (Some(family), Some(attention)) = (cstr(family), cstr(attention)) else {
            set_error("family/attention must be valid strings");
            return PfcaStatus::InvalidArgument;
        };
        let Some(kind) = parse_attention(attention) else {
            set_error(format!("unknown attention `{attention}`"));
            return PfcaStatus::InvalidArgument;
        };
        let Some(spec) = spec_for(family, kind) else {
            set_error(format!("unknown family `{family}`"));
            return PfcaStatus::InvalidArgument;
        };
        match Model::build(&spec, seed) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(PfcaModel { inner: model }));
                PfcaStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                status_for(&e)
            }
        }
    })
}

/// Builds a super-resolution model of custom depth/width (upscale 4).
///
/// # Safety
/// As `pfca_model_new`.
#[no_mangle]
pub unsafe extern "C" fn pfca_model_new_sr(
    blocks: usize,
    width: usize,
    attention: *const c_char,
    seed: u64,
    out: *mut *mut PfcaModel,
) -> PfcaStatus {
    guard(|| {
        if out.is_null() {
            set_error("out handle pointer is null");
            return PfcaStatus::InvalidArgument;
        }
        let Some(kind) = cstr(attention).and_then(parse_attention) else {
            set_error("unknown attention kind");
            return PfcaStatus::InvalidArgument;
        };
        let spec = ModelSpec::SuperRes {
            blocks,
            width,
            upscale: 4,
            attention: kind,
        };
        match Model::build(&spec, seed) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(PfcaModel { inner: model }));
                PfcaStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                status_for(&e)
            }
        }
    })
}

/// Restores the model stored in a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pfca_model_load(
    path: *const c_char,
    out: *mut *mut PfcaModel,
) -> PfcaStatus {
    guard(|| {
        if out.is_null() {
            set_error("out handle pointer is null");
            return PfcaStatus::InvalidArgument;
        }
        let Some(path) = cstr(path) else {
            set_error("path must be a valid string");
            return PfcaStatus::InvalidArgument;
        };
        match load_checkpoint(Path::new(path)) {
            Ok(loaded) => {
                *out = Box::into_raw(Box::new(PfcaModel { inner: loaded.model }));
                PfcaStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                status_for(&e)
            }
        }
    })
}

/// Releases a model handle. Null is a no-op.
///
/// # Safety
/// `model` must be a handle produced by this library, released once.
#[no_mangle]
pub unsafe extern "C" fn pfca_model_free(model: *mut PfcaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Trainable parameter count of the model; 0 for a null handle.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pfca_model_param_count(model: *const PfcaModel) -> u64 {
    if model.is_null() {
        return 0;
    }
    (*model).inner.store.trainable_count()
}

/// Multiply-accumulate count on an N×C×H×W input under the convolution/
/// linear MAC convention (elementwise work excluded).
///
/// # Safety
/// `model` must be a live handle; `out_macs` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pfca_model_macs(
    model: *const PfcaModel,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    out_macs: *mut u64,
) -> PfcaStatus {
    guard(|| {
        if model.is_null() || out_macs.is_null() {
            set_error("null pointer");
            return PfcaStatus::InvalidArgument;
        }
        let shape = match Shape::new(n, c, h, w) {
            Ok(s) => s,
            Err(e) => {
                set_error(e.to_string());
                return PfcaStatus::InvalidArgument;
            }
        };
        match count_flops(&(*model).inner, shape) {
            Ok(report) => {
                *out_macs = report.total_macs;
                PfcaStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                status_for(&e)
            }
        }
    })
}

/// Output shape for an N×C×H×W input, written into `dims_out[4]`.
///
/// # Safety
/// `model` live; `dims_out` must point to four writable usize slots.
#[no_mangle]
pub unsafe extern "C" fn pfca_model_output_shape(
    model: *const PfcaModel,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    dims_out: *mut usize,
) -> PfcaStatus {
    guard(|| {
        if model.is_null() || dims_out.is_null() {
            set_error("null pointer");
            return PfcaStatus::InvalidArgument;
        }
        let dims = match (*model).inner.spec {
            ModelSpec::Classifier { classes, .. } => [n, classes, 1, 1],
            ModelSpec::SuperRes { upscale, .. } => [n, c, h * upscale, w * upscale],
        };
        std::ptr::copy_nonoverlapping(dims.as_ptr(), dims_out, 4);
        PfcaStatus::Ok
    })
}

/// Runs inference on a row-major N,C,H,W f32 buffer of `input_len`
/// elements, writing the output into `output` (`output_len` elements,
/// sized per `pfca_model_output_shape`). Classifier outputs are logits.
///
/// # Safety
/// Buffers must match the stated lengths; the handle must be live.
#[no_mangle]
pub unsafe extern "C" fn pfca_model_forward(
    model: *mut PfcaModel,
    input: *const f32,
    input_len: usize,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    output: *mut f32,
    output_len: usize,
) -> PfcaStatus {
    guard(|| {
        if model.is_null() || input.is_null() || output.is_null() {
            set_error("null pointer");
            return PfcaStatus::InvalidArgument;
        }
        let shape = match Shape::new(n, c, h, w) {
            Ok(s) => s,
            Err(e) => {
                set_error(e.to_string());
                return PfcaStatus::InvalidArgument;
            }
        };
        if shape.count() != input_len {
            set_error(format!(
                "input length {input_len} does not match {shape}"
            ));
            return PfcaStatus::InvalidArgument;
        }
        let data = std::slice::from_raw_parts(input, input_len).to_vec();
        let tensor = match Tensor::from_vec(shape, data) {
            Ok(t) => t,
            Err(e) => {
                set_error(e.to_string());
                return PfcaStatus::InvalidArgument;
            }
        };
        match (*model).inner.predict(&tensor, Mode::Eval) {
            Ok(result) => {
                if result.count() != output_len {
                    set_error(format!(
                        "output buffer holds {output_len}, model produced {}",
                        result.count()
                    ));
                    return PfcaStatus::InvalidArgument;
                }
                std::ptr::copy_nonoverlapping(result.data().as_ptr(), output, output_len);
                PfcaStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                status_for(&e)
            }
        }
    })
}

/// Applies the parameter-free channel attention operator in place on a
/// row-major N,C,H,W f32 buffer.
///
/// # Safety
/// `data` must point to `len` = N·C·H·W writable f32 values.
#[no_mangle]
pub unsafe extern "C" fn pfca_attention_forward(
    data: *mut f32,
    len: usize,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    lambda: f64,
) -> PfcaStatus {
    guard(|| {
        if data.is_null() {
            set_error("null data pointer");
            return PfcaStatus::InvalidArgument;
        }
        let shape = match Shape::new(n, c, h, w) {
            Ok(s) if s.count() == len => s,
            Ok(s) => {
                set_error(format!("length {len} does not match {s}"));
                return PfcaStatus::InvalidArgument;
            }
            Err(e) => {
                set_error(e.to_string());
                return PfcaStatus::InvalidArgument;
            }
        };
        let input = std::slice::from_raw_parts(data, len).to_vec();
        let tensor = Tensor::from_vec(shape, input).expect("length checked");
        match pfca_core::attention::pfca_forward(&tensor, lambda) {
            Ok(out) => {
                std::ptr::copy_nonoverlapping(out.data().as_ptr(), data, len);
                PfcaStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                status_for(&e)
            }
        }
    })
}

unsafe fn plane_from(ptr: *const f64, h: usize, w: usize) -> Option<ImagePlane> {
    if ptr.is_null() {
        return None;
    }
    let data = std::slice::from_raw_parts(ptr, h * w).to_vec();
    ImagePlane::new(h, w, data).ok()
}

/// Peak signal-to-noise ratio between two h×w f64 planes on a `peak`
/// scale; identical planes produce +inf.
///
/// # Safety
/// `a` and `b` must each point to h·w readable f64 values.
#[no_mangle]
pub unsafe extern "C" fn pfca_psnr(
    a: *const f64,
    b: *const f64,
    h: usize,
    w: usize,
    peak: f64,
    out: *mut f64,
) -> PfcaStatus {
    guard(|| {
        let (Some(pa), Some(pb)) = (plane_from(a, h, w), plane_from(b, h, w)) else {
            set_error("null or malformed plane");
            return PfcaStatus::InvalidArgument;
        };
        if out.is_null() {
            set_error("null out pointer");
            return PfcaStatus::InvalidArgument;
        }
        match psnr(&pa, &pb, peak) {
            Ok(v) => {
                *out = v;
                PfcaStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                status_for(&e)
            }
        }
    })
}

/// Structural similarity between two h×w f64 planes (11×11 Gaussian
/// window); requires h, w >= 11.
///
/// # Safety
/// As `pfca_psnr`.
#[no_mangle]
pub unsafe extern "C" fn pfca_ssim(
    a: *const f64,
    b: *const f64,
    h: usize,
    w: usize,
    peak: f64,
    out: *mut f64,
) -> PfcaStatus {
    guard(|| {
        let (Some(pa), Some(pb)) = (plane_from(a, h, w), plane_from(b, h, w)) else {
            set_error("null or malformed plane");
            return PfcaStatus::InvalidArgument;
        };
        if out.is_null() {
            set_error("null out pointer");
            return PfcaStatus::InvalidArgument;
        }
        match ssim(&pa, &pb, peak) {
            Ok(v) => {
                *out = v;
                PfcaStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                status_for(&e)
            }
        }
    })
}

//! Exercises the C entry points from Rust, exactly as a C caller would.

use std::ffi::CString;

use pfca_ffi::{
    pfca_attention_forward, pfca_last_error, pfca_model_forward, pfca_model_free,
    pfca_model_load, pfca_model_macs, pfca_model_new, pfca_model_new_sr,
    pfca_model_output_shape, pfca_model_param_count, pfca_psnr, pfca_ssim, pfca_version,
    PfcaModel, PfcaStatus,
};

fn cs(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let mut buf = vec![0i8; 256];
    let n = unsafe { pfca_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&b| b as u8).collect();
    String::from_utf8_lossy(&bytes).to_string()
}

#[test]
fn version_is_non_empty() {
    let v = unsafe { std::ffi::CStr::from_ptr(pfca_version()) };
    assert!(!v.to_str().unwrap().is_empty());
}

#[test]
fn model_handle_reports_reference_costs() {
    let mut handle: *mut PfcaModel = std::ptr::null_mut();
    let status = unsafe {
        pfca_model_new(cs("msrresnet").as_ptr(), cs("pfca").as_ptr(), 0, &mut handle)
    };
    assert_eq!(status, PfcaStatus::Ok);
    assert!(!handle.is_null());

    let params = unsafe { pfca_model_param_count(handle) };
    assert_eq!(params, 1_517_571);

    let mut macs = 0u64;
    let status = unsafe { pfca_model_macs(handle, 1, 3, 256, 256, &mut macs) };
    assert_eq!(status, PfcaStatus::Ok);
    assert_eq!(macs, 166_207_684_608);

    let mut dims = [0usize; 4];
    let status = unsafe { pfca_model_output_shape(handle, 1, 3, 8, 8, dims.as_mut_ptr()) };
    assert_eq!(status, PfcaStatus::Ok);
    assert_eq!(dims, [1, 3, 32, 32]);

    unsafe { pfca_model_free(handle) };
}

#[test]
fn unknown_names_set_error_and_return_invalid() {
    let mut handle: *mut PfcaModel = std::ptr::null_mut();
    let status = unsafe {
        pfca_model_new(cs("vgg16").as_ptr(), cs("pfca").as_ptr(), 0, &mut handle)
    };
    assert_eq!(status, PfcaStatus::InvalidArgument);
    assert!(handle.is_null());
    assert!(last_error().contains("vgg16"), "{}", last_error());

    let status = unsafe {
        pfca_model_new(cs("msrresnet").as_ptr(), cs("mystery").as_ptr(), 0, &mut handle)
    };
    assert_eq!(status, PfcaStatus::InvalidArgument);
    assert!(last_error().contains("mystery"));

    let status = unsafe {
        pfca_model_new(std::ptr::null(), cs("pfca").as_ptr(), 0, &mut handle)
    };
    assert_eq!(status, PfcaStatus::InvalidArgument);
}

#[test]
fn sr_forward_produces_upscaled_output() {
    let mut handle: *mut PfcaModel = std::ptr::null_mut();
    let status = unsafe { pfca_model_new_sr(2, 8, cs("pfca").as_ptr(), 1, &mut handle) };
    assert_eq!(status, PfcaStatus::Ok);

    let (n, c, h, w) = (1usize, 3usize, 6usize, 5usize);
    let input: Vec<f32> = (0..n * c * h * w).map(|i| (i as f32 * 0.013).sin() * 0.5 + 0.5).collect();
    let mut dims = [0usize; 4];
    unsafe { pfca_model_output_shape(handle, n, c, h, w, dims.as_mut_ptr()) };
    assert_eq!(dims, [1, 3, 24, 20]);
    let mut output = vec![0.0f32; dims.iter().product()];
    let status = unsafe {
        pfca_model_forward(
            handle,
            input.as_ptr(),
            input.len(),
            n,
            c,
            h,
            w,
            output.as_mut_ptr(),
            output.len(),
        )
    };
    assert_eq!(status, PfcaStatus::Ok, "{}", last_error());
    assert!(output.iter().all(|v| v.is_finite()));
    assert!(output.iter().any(|&v| v != 0.0));

    // wrong buffer sizes are rejected
    let status = unsafe {
        pfca_model_forward(
            handle,
            input.as_ptr(),
            input.len() - 1,
            n,
            c,
            h,
            w,
            output.as_mut_ptr(),
            output.len(),
        )
    };
    assert_eq!(status, PfcaStatus::InvalidArgument);

    unsafe { pfca_model_free(handle) };
}

#[test]
fn attention_forward_matches_closed_form() {
    // two channels with constant planes 1 and -1: both gates are
    // sigmoid((1 + 2·1.0001) / (4·1.0001)) = 0.679173
    let (n, c, h, w) = (1usize, 2usize, 2usize, 2usize);
    let mut data = vec![1.0f32, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0];
    let status =
        unsafe { pfca_attention_forward(data.as_mut_ptr(), data.len(), n, c, h, w, 1e-4) };
    assert_eq!(status, PfcaStatus::Ok);
    for &v in &data[0..4] {
        assert!((v - 0.679173).abs() < 1e-5, "{v}");
    }
    for &v in &data[4..8] {
        assert!((v + 0.679173).abs() < 1e-5, "{v}");
    }

    // shape/length mismatch
    let status = unsafe { pfca_attention_forward(data.as_mut_ptr(), 7, n, c, h, w, 1e-4) };
    assert_eq!(status, PfcaStatus::InvalidArgument);
    // non-positive lambda
    let status =
        unsafe { pfca_attention_forward(data.as_mut_ptr(), data.len(), n, c, h, w, 0.0) };
    assert_eq!(status, PfcaStatus::InvalidArgument);
}

#[test]
fn metrics_entry_points() {
    let a = vec![100.0f64; 16 * 16];
    let b = vec![101.0f64; 16 * 16];
    let mut out = 0.0f64;
    let status = unsafe { pfca_psnr(a.as_ptr(), b.as_ptr(), 16, 16, 255.0, &mut out) };
    assert_eq!(status, PfcaStatus::Ok);
    assert!((out - 48.1308).abs() < 1e-4);

    let status = unsafe { pfca_ssim(a.as_ptr(), a.as_ptr(), 16, 16, 255.0, &mut out) };
    assert_eq!(status, PfcaStatus::Ok);
    assert!((out - 1.0).abs() < 1e-9);

    // image smaller than the window
    let tiny = vec![0.0f64; 64];
    let status = unsafe { pfca_ssim(tiny.as_ptr(), tiny.as_ptr(), 8, 8, 255.0, &mut out) };
    assert_eq!(status, PfcaStatus::InvalidArgument);

    let status = unsafe { pfca_psnr(std::ptr::null(), b.as_ptr(), 16, 16, 255.0, &mut out) };
    assert_eq!(status, PfcaStatus::InvalidArgument);
}

#[test]
fn checkpoint_load_round_trips_through_the_c_api() {
    use pfca_core::attention::AttentionKind;
    use pfca_core::models::{Model, ModelSpec};
    use pfca_core::train::{save_checkpoint, TrainState};

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.pfca");
    let spec = ModelSpec::SuperRes {
        blocks: 1,
        width: 4,
        upscale: 4,
        attention: AttentionKind::ca(),
    };
    let model = Model::build(&spec, 9).unwrap();
    save_checkpoint(&model, &[], &TrainState::default(), &path).unwrap();

    let mut handle: *mut PfcaModel = std::ptr::null_mut();
    let cpath = cs(path.to_str().unwrap());
    let status = unsafe { pfca_model_load(cpath.as_ptr(), &mut handle) };
    assert_eq!(status, PfcaStatus::Ok, "{}", last_error());
    let params = unsafe { pfca_model_param_count(handle) };
    assert_eq!(params, model.store.trainable_count());
    unsafe { pfca_model_free(handle) };

    let missing = cs("/nonexistent/ckpt.pfca");
    let status = unsafe { pfca_model_load(missing.as_ptr(), &mut handle) };
    assert_eq!(status, PfcaStatus::Io);
}

#[test]
fn generated_header_is_in_tree() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("include")
        .join("pfca.h");
    let text = std::fs::read_to_string(header).unwrap();
    for symbol in [
        "pfca_model_new",
        "pfca_model_forward",
        "pfca_attention_forward",
        "pfca_psnr",
        "PFCA_STATUS_OK",
        "typedef struct PfcaModel PfcaModel",
    ] {
        assert!(text.contains(symbol), "header missing {symbol}");
    }
}

use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use jssc_ffi::*;

fn last_error() -> String {
    let mut needed = 0usize;
    unsafe { jssc_last_error(ptr::null_mut(), 0, &mut needed) };
    let mut buf = vec![0 as c_char; needed];
    assert_eq!(unsafe { jssc_last_error(buf.as_mut_ptr(), buf.len(), ptr::null_mut()) }, JsscStatus::Ok);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_string()
}

fn config_json(cfg: *const JsscConfig) -> String {
    let mut needed = 0usize;
    let st = unsafe { jssc_config_to_json(cfg, ptr::null_mut(), 0, &mut needed) };
    assert_eq!(st, JsscStatus::BufferTooSmall);
    let mut buf = vec![0 as c_char; needed];
    assert_eq!(unsafe { jssc_config_to_json(cfg, buf.as_mut_ptr(), buf.len(), ptr::null_mut()) }, JsscStatus::Ok);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_string()
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(jssc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn config_handle_round_trip() {
    let mut cfg: *mut JsscConfig = ptr::null_mut();
    assert_eq!(unsafe { jssc_config_new(&mut cfg) }, JsscStatus::Ok);
    let key = CString::new("channel.comm_snr_db").unwrap();
    let val = CString::new("-4.5").unwrap();
    assert_eq!(unsafe { jssc_config_set(cfg, key.as_ptr(), val.as_ptr()) }, JsscStatus::Ok);
    assert!(config_json(cfg).contains("-4.5"));

    let bad = CString::new("channel.volume").unwrap();
    assert_eq!(unsafe { jssc_config_set(cfg, bad.as_ptr(), val.as_ptr()) }, JsscStatus::Config);
    assert!(last_error().contains("channel.volume"));
    // A rejected update leaves the handle unchanged.
    assert!(config_json(cfg).contains("-4.5"));

    let mut hash = [0 as c_char; 32];
    assert_eq!(unsafe { jssc_config_hash(cfg, hash.as_mut_ptr(), hash.len(), ptr::null_mut()) }, JsscStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(hash.as_ptr()) }.to_bytes().len(), 24);
    unsafe { jssc_config_free(cfg) };
    unsafe { jssc_config_free(ptr::null_mut()) };
}

#[test]
fn null_arguments_are_reported() {
    assert_eq!(unsafe { jssc_config_new(ptr::null_mut()) }, JsscStatus::NullPointer);
    assert_eq!(unsafe { jssc_config_set(ptr::null_mut(), ptr::null(), ptr::null()) }, JsscStatus::NullPointer);
    assert!(last_error().contains("null"));
    let mut out = 0.0;
    assert_eq!(unsafe { jssc_psnr(ptr::null(), ptr::null(), 3072, &mut out) }, JsscStatus::NullPointer);
}

#[test]
fn missing_files_map_to_data_errors() {
    let mut cfg: *mut JsscConfig = ptr::null_mut();
    let path = CString::new("/nonexistent/c.json").unwrap();
    assert_eq!(unsafe { jssc_config_from_file(path.as_ptr(), &mut cfg) }, JsscStatus::Data);
    assert!(cfg.is_null());
    let mut model: *mut JsscModel = ptr::null_mut();
    assert_eq!(unsafe { jssc_model_load(path.as_ptr(), &mut model) }, JsscStatus::Data);
}

#[test]
fn reed_solomon_through_the_abi() {
    let payload: Vec<u8> = (0..JSSC_RS_K).map(|i| (i * 7 + 3) as u8).collect();
    let mut cw = [0u8; JSSC_RS_N];
    assert_eq!(unsafe { jssc_rs_encode(payload.as_ptr(), cw.as_mut_ptr()) }, JsscStatus::Ok);
    assert_eq!(&cw[..JSSC_RS_K], &payload[..]);
    for i in 0..40 {
        cw[i * 6] ^= 0x5a;
    }
    let mut out = [0u8; JSSC_RS_K];
    let mut corrected = 0usize;
    assert_eq!(unsafe { jssc_rs_decode(cw.as_ptr(), out.as_mut_ptr(), &mut corrected) }, JsscStatus::Ok);
    assert_eq!(&out[..], &payload[..]);
    assert_eq!(corrected, 40);
    for b in cw.iter_mut().take(120) {
        *b ^= 0xff;
    }
    assert_eq!(
        unsafe { jssc_rs_decode(cw.as_ptr(), out.as_mut_ptr(), ptr::null_mut()) },
        JsscStatus::DecodeFailure
    );
}

#[test]
fn qam_through_the_abi() {
    let bytes: Vec<u8> = (0..=255).collect();
    let mut iq = vec![0.0; 4 * bytes.len()];
    assert_eq!(
        unsafe { jssc_qam16_modulate(bytes.as_ptr(), bytes.len(), iq.as_mut_ptr(), iq.len() - 1) },
        JsscStatus::BufferTooSmall
    );
    assert_eq!(
        unsafe { jssc_qam16_modulate(bytes.as_ptr(), bytes.len(), iq.as_mut_ptr(), iq.len()) },
        JsscStatus::Ok
    );
    let energy: f64 = iq.chunks(2).map(|p| p[0] * p[0] + p[1] * p[1]).sum::<f64>() / (iq.len() / 2) as f64;
    assert!((energy - 1.0).abs() < 1e-12);
    let mut back = vec![0u8; bytes.len()];
    assert_eq!(unsafe { jssc_qam16_demodulate(iq.as_ptr(), back.as_mut_ptr(), back.len()) }, JsscStatus::Ok);
    assert_eq!(back, bytes);
}

#[test]
fn psnr_through_the_abi() {
    let a = vec![0.25f32; 3072];
    let b = vec![0.35f32; 3072];
    let mut out = 0.0;
    assert_eq!(unsafe { jssc_psnr(a.as_ptr(), b.as_ptr(), a.len(), &mut out) }, JsscStatus::Ok);
    // MSE 0.01 -> 20 dB.
    assert!((out - 20.0).abs() < 1e-4, "{out}");
    assert_eq!(unsafe { jssc_psnr(a.as_ptr(), b.as_ptr(), 100, &mut out) }, JsscStatus::Contract);
}

fn write_fixture(dir: &Path) {
    // Six full-size batch files of deterministic noise plus their manifest.
    let names = ["data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin", "test_batch.bin"];
    let mut state = 12345u32;
    for name in names {
        let mut bytes = Vec::new();
        for i in 0..10_000u32 {
            bytes.push((i % 10) as u8);
            for _ in 0..3072 {
                state = state.wrapping_mul(1_103_515_245).wrapping_add(12345);
                bytes.push((state >> 24) as u8);
            }
        }
        std::fs::write(dir.join(name), bytes).unwrap();
    }
    jssc::dataset::fetch::write_checksums(dir).unwrap();
}

#[test]
fn train_save_load_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir_all(&data).unwrap();
    write_fixture(&data);
    let mut cfg: *mut JsscConfig = ptr::null_mut();
    assert_eq!(unsafe { jssc_config_new(&mut cfg) }, JsscStatus::Ok);
    let set = |k: &str, v: &str| {
        let (k, v) = (CString::new(k).unwrap(), CString::new(v).unwrap());
        assert_eq!(unsafe { jssc_config_set(cfg, k.as_ptr(), v.as_ptr()) }, JsscStatus::Ok, "{}", last_error());
    };
    set("data.dir", data.to_str().unwrap());
    set("data.subset_size", "60");
    set("data.test_size", "10");
    set("train.epochs", "1");
    set("model.latent_size", "8");
    set("model.encoder_filters", "[4, 4, 4]");
    set("model.encoder_dense", "16");
    set("model.decoder1_dense", "16");
    set("model.decoder1_filters", "[4, 4]");

    let mut ds: *mut JsscDataset = ptr::null_mut();
    assert_eq!(unsafe { jssc_dataset_load(cfg, &mut ds) }, JsscStatus::Ok, "{}", last_error());
    let (mut n_train, mut n_test) = (0usize, 0usize);
    assert_eq!(unsafe { jssc_dataset_sizes(ds, &mut n_train, &mut n_test) }, JsscStatus::Ok);
    assert_eq!((n_train, n_test), (60, 10));

    let mut model: *mut JsscModel = ptr::null_mut();
    assert_eq!(unsafe { jssc_model_train(cfg, ds, &mut model) }, JsscStatus::Ok, "{}", last_error());
    let mut m = JsscMetrics {
        psnr_db: 0.0,
        ssim: 0.0,
        sensing_accuracy: 0.0,
        semantic_accuracy: 0.0,
        samples: 0,
    };
    assert_eq!(unsafe { jssc_model_evaluate(model, ptr::null(), ds, &mut m) }, JsscStatus::Ok);
    assert_eq!(m.samples, 10);
    assert!(m.semantic_accuracy.is_nan());
    assert!((0.0..=1.0).contains(&m.sensing_accuracy));

    let ck = CString::new(tmp.path().join("ck").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { jssc_model_save(model, ck.as_ptr()) }, JsscStatus::Ok, "{}", last_error());
    let mut loaded: *mut JsscModel = ptr::null_mut();
    assert_eq!(unsafe { jssc_model_load(ck.as_ptr(), &mut loaded) }, JsscStatus::Ok, "{}", last_error());
    let mut m2 = m;
    assert_eq!(unsafe { jssc_model_evaluate(loaded, ptr::null(), ds, &mut m2) }, JsscStatus::Ok);
    assert_eq!((m.psnr_db, m.ssim, m.sensing_accuracy, m.samples), (m2.psnr_db, m2.ssim, m2.sensing_accuracy, m2.samples));

    // Another architecture cannot evaluate this model.
    set("model.latent_size", "12");
    assert_eq!(unsafe { jssc_model_evaluate(loaded, cfg, ds, &mut m2) }, JsscStatus::Contract);

    unsafe {
        jssc_model_free(model);
        jssc_model_free(loaded);
        jssc_dataset_free(ds);
        jssc_config_free(cfg);
    }
}

fn target_dir() -> PathBuf {
    // The test executable lives in <target>/<profile>/deps.
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let header_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let lib = target_dir().join("libjssc_ffi.a");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() || !lib.is_file() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <string.h>
#include "jssc.h"

int main(void) {
    unsigned char payload[JSSC_RS_K], cw[JSSC_RS_N], out[JSSC_RS_K];
    size_t corrected = 0, needed = 0;
    JsscConfig *cfg = NULL;
    char msg[256];
    for (int i = 0; i < JSSC_RS_K; i++) payload[i] = (unsigned char)(i * 3);
    if (jssc_rs_encode(payload, cw) != JSSC_STATUS_OK) return 1;
    cw[0] ^= 1; cw[100] ^= 0x80;
    if (jssc_rs_decode(cw, out, &corrected) != JSSC_STATUS_OK || corrected != 2) return 2;
    if (memcmp(out, payload, JSSC_RS_K) != 0) return 3;
    if (jssc_config_new(&cfg) != JSSC_STATUS_OK) return 4;
    if (jssc_config_set(cfg, "channel.kind", "bogus") != JSSC_STATUS_CONFIG) return 5;
    if (jssc_last_error(msg, sizeof msg, &needed) != JSSC_STATUS_OK || needed < 2) return 6;
    jssc_config_free(cfg);
    printf("%s\n", jssc_version());
    return 0;
}
"#,
    )
    .unwrap();
    let exe = tmp.path().join("smoke");
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile/link failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C smoke test exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
}

//! C ABI over the `jssc` library.
//!
//! Objects cross the boundary as opaque handles created by `*_new`, `*_load`
//! or `*_train` functions and released with the matching `*_free`. Every
//! fallible call returns a [`JsscStatus`]; on failure the message is kept
//! per thread and can be copied out with [`jssc_last_error`]. Panics are
//! caught at the boundary and reported as `JSSC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use jssc::baseline::rs::{self, K as RS_K, N as RS_N};
use jssc::baseline::{qam, rs_decode, rs_encode};
use jssc::dataset::DatasetSplit;
use jssc::error::Error;
use jssc::harness::{self, evaluate_model, load_run, train_model, ExperimentConfig};
use jssc::metrics::{psnr, ImageRef};
use jssc::models::ModelBundle;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JsscStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Data = 5,
    Contract = 6,
    Compression = 7,
    Divergence = 8,
    /// The Reed-Solomon decoder found more errors than it can correct.
    DecodeFailure = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// Experiment configuration.
pub struct JsscConfig(ExperimentConfig);

/// Loaded training and test images.
pub struct JsscDataset(DatasetSplit);

/// Trained model with the configuration it was trained under.
pub struct JsscModel {
    bundle: ModelBundle<f32>,
    config: ExperimentConfig,
}

/// Test metrics. `semantic_accuracy` is NaN when the model has no semantic task.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JsscMetrics {
    pub psnr_db: f64,
    pub ssim: f64,
    pub sensing_accuracy: f64,
    pub semantic_accuracy: f64,
    pub samples: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> JsscStatus {
    match e {
        Error::Config(_) => JsscStatus::Config,
        Error::Io(_) | Error::Json(_) => JsscStatus::Io,
        Error::Ingest { .. } | Error::Format { .. } | Error::Results { .. } => JsscStatus::Data,
        Error::Domain(_) | Error::Shape(_) | Error::Contract(_) | Error::Plot(_) => JsscStatus::Contract,
        Error::Compression(_) => JsscStatus::Compression,
        Error::Divergence { .. } => JsscStatus::Divergence,
    }
}

struct Fail(JsscStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn fail<T>(status: JsscStatus, msg: impl Into<String>) -> Result<T, Fail> {
    Err(Fail(status, msg.into()))
}

/// Runs `f`, recording any error or panic for [`jssc_last_error`].
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> JsscStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            JsscStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            JsscStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return fail(JsscStatus::NullPointer, format!("{name} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(JsscStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .map_or_else(|| fail(JsscStatus::NullPointer, format!("{name} is null")), Ok)
}

unsafe fn mut_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    p.as_mut()
        .map_or_else(|| fail(JsscStatus::NullPointer, format!("{name} is null")), Ok)
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(JsscStatus::NullPointer, format!("{name} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return fail(JsscStatus::NullPointer, format!("{name} is null"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Copies `text` plus a NUL into `buf` when it fits; always reports the
/// needed size (including the NUL) through `needed`.
unsafe fn write_text(text: &str, buf: *mut c_char, cap: usize, needed: *mut usize) -> Result<(), Fail> {
    let bytes = text.as_bytes();
    if let Some(n) = needed.as_mut() {
        *n = bytes.len() + 1;
    }
    if cap < bytes.len() + 1 {
        return fail(JsscStatus::BufferTooSmall, format!("need {} bytes", bytes.len() + 1));
    }
    let out = slice_out(buf.cast::<u8>(), cap, "buf")?;
    out[..bytes.len()].copy_from_slice(bytes);
    out[bytes.len()] = 0;
    Ok(())
}

fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return fail(JsscStatus::NullPointer, "output handle pointer is null");
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn jssc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf`.
///
/// # Safety
/// `buf` must point to `cap` writable bytes (or be null with `cap == 0`);
/// `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn jssc_last_error(buf: *mut c_char, cap: usize, needed: *mut usize) -> JsscStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    match write_text(&msg, buf, cap, needed) {
        Ok(()) => JsscStatus::Ok,
        Err(Fail(s, _)) => s,
    }
}

// ------------------------------------------------------------ configuration

/// Default configuration.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn jssc_config_new(out: *mut *mut JsscConfig) -> JsscStatus {
    guard(|| put(out, JsscConfig(ExperimentConfig::default())))
}

/// Configuration read from a JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn jssc_config_from_file(path: *const c_char, out: *mut *mut JsscConfig) -> JsscStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        put(out, JsscConfig(ExperimentConfig::from_file(path.as_ref())?))
    })
}

/// Sets a key by dotted path (`channel.comm_snr_db`, `"5"`); the value is
/// parsed as JSON when possible, otherwise taken as a string.
///
/// # Safety
/// `config` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn jssc_config_set(config: *mut JsscConfig, key: *const c_char, value: *const c_char) -> JsscStatus {
    guard(|| {
        let cfg = mut_arg(config, "config")?;
        let (key, value) = (str_arg(key, "key")?, str_arg(value, "value")?);
        let mut next = cfg.0.clone();
        next.set(key, value)?;
        cfg.0 = next;
        Ok(())
    })
}

/// Writes the configuration as pretty JSON.
///
/// # Safety
/// `config` must be a live handle; `buf` must hold `cap` bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn jssc_config_to_json(
    config: *const JsscConfig,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> JsscStatus {
    guard(|| {
        let cfg = ref_arg(config, "config")?;
        write_text(&cfg.0.to_json_pretty()?, buf, cap, needed)
    })
}

/// Writes the configuration digest (24 hex characters).
///
/// # Safety
/// As for [`jssc_config_to_json`].
#[no_mangle]
pub unsafe extern "C" fn jssc_config_hash(
    config: *const JsscConfig,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> JsscStatus {
    guard(|| {
        let cfg = ref_arg(config, "config")?;
        write_text(&cfg.0.config_hash()?, buf, cap, needed)
    })
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn jssc_config_free(config: *mut JsscConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

// ------------------------------------------------------------------ dataset

/// Loads the training subset and test subsample named by `config`.
///
/// # Safety
/// `config` must be a live handle; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn jssc_dataset_load(config: *const JsscConfig, out: *mut *mut JsscDataset) -> JsscStatus {
    guard(|| {
        let cfg = ref_arg(config, "config")?;
        put(out, JsscDataset(cfg.0.load_data()?))
    })
}

/// Number of training and test images.
///
/// # Safety
/// `dataset` must be a live handle; the counters may be null.
#[no_mangle]
pub unsafe extern "C" fn jssc_dataset_sizes(dataset: *const JsscDataset, train: *mut usize, test: *mut usize) -> JsscStatus {
    guard(|| {
        let ds = ref_arg(dataset, "dataset")?;
        if let Some(t) = train.as_mut() {
            *t = ds.0.train.len();
        }
        if let Some(t) = test.as_mut() {
            *t = ds.0.test.len();
        }
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn jssc_dataset_free(dataset: *mut JsscDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

// -------------------------------------------------------------------- model

/// Trains a model under `config` on `dataset`.
///
/// # Safety
/// `config` and `dataset` must be live handles; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn jssc_model_train(
    config: *const JsscConfig,
    dataset: *const JsscDataset,
    out: *mut *mut JsscModel,
) -> JsscStatus {
    guard(|| {
        let (cfg, ds) = (ref_arg(config, "config")?, ref_arg(dataset, "dataset")?);
        let outcome = train_model(&cfg.0, &ds.0, |_| {})?;
        put(
            out,
            JsscModel {
                bundle: outcome.bundle,
                config: cfg.0.clone(),
            },
        )
    })
}

/// Loads a checkpoint directory written by `jssc train` or [`jssc_model_save`].
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn jssc_model_load(dir: *const c_char, out: *mut *mut JsscModel) -> JsscStatus {
    guard(|| {
        let dir = PathBuf::from(str_arg(dir, "dir")?);
        let (bundle, config, _) = load_run(&dir)?;
        put(out, JsscModel { bundle, config })
    })
}

/// Writes the model and its configuration to `dir`.
///
/// # Safety
/// `model` must be a live handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn jssc_model_save(model: *const JsscModel, dir: *const c_char) -> JsscStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let dir = PathBuf::from(str_arg(dir, "dir")?);
        m.bundle.save(&dir)?;
        std::fs::write(dir.join(harness::RUN_CONFIG), m.config.to_json_pretty()?).map_err(Error::from)?;
        Ok(())
    })
}

/// Scores the model on the dataset's test images under the channel settings
/// of `config` (pass null to use the training configuration).
///
/// # Safety
/// `model` and `dataset` must be live handles, `config` a live handle or
/// null, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jssc_model_evaluate(
    model: *mut JsscModel,
    config: *const JsscConfig,
    dataset: *const JsscDataset,
    out: *mut JsscMetrics,
) -> JsscStatus {
    guard(|| {
        let m = mut_arg(model, "model")?;
        let ds = ref_arg(dataset, "dataset")?;
        let eval_cfg = match config.as_ref() {
            Some(c) => c.0.clone(),
            None => m.config.clone(),
        };
        if eval_cfg.model != m.config.model {
            return fail(JsscStatus::Contract, "evaluation config describes a different architecture");
        }
        let out = mut_arg(out, "out")?;
        let trained = m.config.clone();
        let rec = evaluate_model(&mut m.bundle, &trained, &eval_cfg, None, &ds.0, 0)?;
        *out = JsscMetrics {
            psnr_db: rec.psnr_db.unwrap_or(f64::NAN),
            ssim: rec.ssim.unwrap_or(f64::NAN),
            sensing_accuracy: rec.sensing_accuracy.unwrap_or(f64::NAN),
            semantic_accuracy: rec.semantic_accuracy.unwrap_or(f64::NAN),
            samples: rec.eval_samples,
        };
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn jssc_model_free(model: *mut JsscModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// -------------------------------------------------------- link primitives

/// Payload bytes per RS(255,152) codeword.
pub const JSSC_RS_K: usize = 152;
/// Bytes per RS(255,152) codeword.
pub const JSSC_RS_N: usize = 255;

/// Systematic RS(255,152) encoding: payload first, parity last.
///
/// # Safety
/// `payload` must hold 152 bytes and `codeword` 255 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn jssc_rs_encode(payload: *const u8, codeword: *mut u8) -> JsscStatus {
    guard(|| {
        let p = slice_arg(payload, RS_K, "payload")?;
        let out = slice_out(codeword, RS_N, "codeword")?;
        out.copy_from_slice(&rs_encode(p)?);
        Ok(())
    })
}

/// Decodes one codeword; returns `JSSC_STATUS_DECODE_FAILURE` beyond the
/// correction radius.
///
/// # Safety
/// `codeword` must hold 255 bytes, `payload` 152 writable bytes;
/// `corrected` may be null.
#[no_mangle]
pub unsafe extern "C" fn jssc_rs_decode(codeword: *const u8, payload: *mut u8, corrected: *mut usize) -> JsscStatus {
    guard(|| {
        let cw = slice_arg(codeword, RS_N, "codeword")?;
        let out = slice_out(payload, RS_K, "payload")?;
        match rs_decode(cw)? {
            Ok(d) => {
                out.copy_from_slice(&d.payload);
                if let Some(c) = corrected.as_mut() {
                    *c = d.corrected;
                }
                Ok(())
            }
            Err(_) => fail(
                JsscStatus::DecodeFailure,
                format!("more than {} byte errors", rs::T),
            ),
        }
    })
}

/// Gray 16-QAM: two symbols per byte, high nibble first, written as
/// interleaved (I, Q) pairs into `iq` (`4 * len` doubles).
///
/// # Safety
/// `bytes` must hold `len` bytes and `iq` `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn jssc_qam16_modulate(bytes: *const u8, len: usize, iq: *mut f64, cap: usize) -> JsscStatus {
    guard(|| {
        let b = slice_arg(bytes, len, "bytes")?;
        if cap < 4 * len {
            return fail(JsscStatus::BufferTooSmall, format!("need {} doubles", 4 * len));
        }
        let out = slice_out(iq, cap, "iq")?;
        for (i, s) in qam::modulate_bytes(b).symbols.iter().enumerate() {
            out[2 * i] = s.re;
            out[2 * i + 1] = s.im;
        }
        Ok(())
    })
}

/// Hard-decision demodulation of interleaved (I, Q) pairs back to bytes.
///
/// # Safety
/// `iq` must hold `4 * len` doubles and `bytes` `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn jssc_qam16_demodulate(iq: *const f64, bytes: *mut u8, len: usize) -> JsscStatus {
    guard(|| {
        let v = slice_arg(iq, 4 * len, "iq")?;
        let out = slice_out(bytes, len, "bytes")?;
        for (i, o) in out.iter_mut().enumerate() {
            let hi = qam::demap_symbol(jssc::channel::Complex64::new(v[4 * i], v[4 * i + 1]));
            let lo = qam::demap_symbol(jssc::channel::Complex64::new(v[4 * i + 2], v[4 * i + 3]));
            *o = (hi << 4) | lo;
        }
        Ok(())
    })
}

/// PSNR in dB of a 32x32x3 prediction against its reference (values in [0, 1]).
///
/// # Safety
/// Both pointers must hold `len` floats; `len` must be 3072.
#[no_mangle]
pub unsafe extern "C" fn jssc_psnr(reference: *const f32, prediction: *const f32, len: usize, out: *mut f64) -> JsscStatus {
    guard(|| {
        let (r, p) = (slice_arg(reference, len, "reference")?, slice_arg(prediction, len, "prediction")?);
        let out = mut_arg(out, "out")?;
        *out = psnr(&ImageRef::cifar(r)?, &ImageRef::cifar(p)?)?;
        Ok(())
    })
}

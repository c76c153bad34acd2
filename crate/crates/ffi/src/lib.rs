//! C ABI for loading trained checkpoints and generating text.
//!
//! Every entry point is panic-safe: failures come back as status codes, never
//! as unwinds across the boundary. Strings handed out through `out`
//! parameters belong to the caller and must be released with
//! `fs2s_string_free`; pointers from `fs2s_last_error_message` and
//! `fs2s_version` belong to the library and must not be freed.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use fuzzys2s::cli::checkpoint::load_model;
use fuzzys2s::model::FuzzyS2SModel;

/// Opaque handle to a loaded model.
pub struct Fs2sModel {
    inner: FuzzyS2SModel,
}

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fs2sStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    LoadFailed = 3,
    GenerateFailed = 4,
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', "?");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).expect("NULs stripped"));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::default());
}

/// Message for the most recent failure on this thread; empty after a
/// success. Valid until the next call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn fs2s_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string; do not free.
#[no_mangle]
pub extern "C" fn fs2s_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Loads a checkpoint file into a fresh model handle.
///
/// # Safety
/// `path` must point to a NUL-terminated string. `out` must be a valid
/// location to store the handle; it is set to NULL on failure.
#[no_mangle]
pub unsafe extern "C" fn fs2s_model_load(
    path: *const c_char,
    out: *mut *mut Fs2sModel,
) -> Fs2sStatus {
    if path.is_null() || out.is_null() {
        set_error("fs2s_model_load: null argument");
        return Fs2sStatus::NullArgument;
    }
    *out = ptr::null_mut();
    let Ok(path_str) = CStr::from_ptr(path).to_str() else {
        set_error("fs2s_model_load: path is not UTF-8");
        return Fs2sStatus::InvalidUtf8;
    };
    match catch_unwind(|| load_model(Path::new(path_str))) {
        Ok(Ok((model, _meta))) => {
            *out = Box::into_raw(Box::new(Fs2sModel { inner: model }));
            clear_error();
            Fs2sStatus::Ok
        }
        Ok(Err(e)) => {
            set_error(&e.to_string());
            Fs2sStatus::LoadFailed
        }
        Err(_) => {
            set_error("fs2s_model_load: internal panic");
            Fs2sStatus::Panic
        }
    }
}

/// Releases a handle from `fs2s_model_load`. NULL is a no-op.
///
/// # Safety
/// `model` must be NULL or a handle this library returned, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fs2s_model_free(model: *mut Fs2sModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Rule count K of a loaded model; 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle from `fs2s_model_load`.
#[no_mangle]
pub unsafe extern "C" fn fs2s_model_rules(model: *const Fs2sModel) -> u32 {
    if model.is_null() {
        return 0;
    }
    (*model).inner.rules() as u32
}

/// Runs greedy generation on one input text. On success `*out` holds a
/// NUL-terminated UTF-8 string owned by the caller (release it with
/// `fs2s_string_free`).
///
/// # Safety
/// `model` must be a live handle; `input` a NUL-terminated string; `out` a
/// valid location, set to NULL on failure.
#[no_mangle]
pub unsafe extern "C" fn fs2s_generate(
    model: *const Fs2sModel,
    input: *const c_char,
    out: *mut *mut c_char,
) -> Fs2sStatus {
    if model.is_null() || input.is_null() || out.is_null() {
        set_error("fs2s_generate: null argument");
        return Fs2sStatus::NullArgument;
    }
    *out = ptr::null_mut();
    let Ok(text) = CStr::from_ptr(input).to_str() else {
        set_error("fs2s_generate: input is not UTF-8");
        return Fs2sStatus::InvalidUtf8;
    };
    let inner = &(*model).inner;
    match catch_unwind(AssertUnwindSafe(|| inner.generate_text(text))) {
        Ok(Ok(s)) => {
            let c = CString::new(s.replace('\0', "?")).expect("NULs stripped");
            *out = c.into_raw();
            clear_error();
            Fs2sStatus::Ok
        }
        Ok(Err(e)) => {
            set_error(&e.to_string());
            Fs2sStatus::GenerateFailed
        }
        Err(_) => {
            set_error("fs2s_generate: internal panic");
            Fs2sStatus::Panic
        }
    }
}

/// Releases a string returned by `fs2s_generate`. NULL is a no-op.
///
/// # Safety
/// `s` must be NULL or a string this library returned, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fs2s_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fuzzys2s::cli::checkpoint::{save_model, CheckpointMeta};
    use fuzzys2s::model::{fit, TrainConfig, Variant};
    use fuzzys2s::transformer::TransformerConfig;

    fn trained_checkpoint(dir: &Path) -> std::path::PathBuf {
        let words = ["ada", "bix", "cor", "dun"];
        let mk = |n: usize, salt: usize| -> Vec<(String, String)> {
            (0..n)
                .map(|i| {
                    let len = 1 + (i + salt) % 3;
                    let t: Vec<&str> =
                        (0..len).map(|j| words[(i * 3 + j + salt) % words.len()]).collect();
                    let t = t.join(" ");
                    (t.clone(), t)
                })
                .collect()
        };
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 8,
            rules: 2,
            seed: 5,
            max_len: 12,
            val_split: 0.25,
            ..TrainConfig::default()
        };
        let arch = TransformerConfig {
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            d_ff: 16,
            dropout: 0.0,
            max_len: 12,
            vocab_size: 0,
        };
        let report = fit(&mk(16, 0), &mk(4, 1), &cfg, &arch, Variant::Full).unwrap();
        let path = dir.join("m.ckpt");
        save_model(&path, &report.model, &CheckpointMeta { dataset: None, train_frac: 0.8 })
            .unwrap();
        path
    }

    #[test]
    fn load_generate_free_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = trained_checkpoint(dir.path());
        let cpath = CString::new(ckpt.to_str().unwrap()).unwrap();

        let mut handle: *mut Fs2sModel = ptr::null_mut();
        let st = unsafe { fs2s_model_load(cpath.as_ptr(), &mut handle) };
        assert_eq!(st, Fs2sStatus::Ok);
        assert!(!handle.is_null());
        assert_eq!(unsafe { fs2s_model_rules(handle) }, 2);

        let input = CString::new("ada cor").unwrap();
        let mut s: *mut c_char = ptr::null_mut();
        let st = unsafe { fs2s_generate(handle, input.as_ptr(), &mut s) };
        assert_eq!(st, Fs2sStatus::Ok);
        assert!(!s.is_null());
        let text = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
        assert!(text.chars().all(|c| c.is_ascii()), "echo vocab stays ascii: {text}");
        unsafe { fs2s_string_free(s) };

        // Same input, same output: the handle is deterministic.
        let mut s2: *mut c_char = ptr::null_mut();
        assert_eq!(unsafe { fs2s_generate(handle, input.as_ptr(), &mut s2) }, Fs2sStatus::Ok);
        assert_eq!(unsafe { CStr::from_ptr(s2) }.to_str().unwrap(), text);
        unsafe { fs2s_string_free(s2) };

        unsafe { fs2s_model_free(handle) };
    }

    #[test]
    fn status_codes_cover_null_missing_and_garbage_inputs() {
        let mut handle: *mut Fs2sModel = ptr::null_mut();
        assert_eq!(
            unsafe { fs2s_model_load(ptr::null(), &mut handle) },
            Fs2sStatus::NullArgument
        );

        let missing = CString::new("/nonexistent/m.ckpt").unwrap();
        assert_eq!(
            unsafe { fs2s_model_load(missing.as_ptr(), &mut handle) },
            Fs2sStatus::LoadFailed
        );
        assert!(handle.is_null());
        let msg = unsafe { CStr::from_ptr(fs2s_last_error_message()) };
        assert!(!msg.to_bytes().is_empty(), "failure leaves a message");

        let dir = tempfile::tempdir().unwrap();
        let bogus = dir.path().join("junk.ckpt");
        std::fs::write(&bogus, b"not a checkpoint\n").unwrap();
        let cpath = CString::new(bogus.to_str().unwrap()).unwrap();
        assert_eq!(
            unsafe { fs2s_model_load(cpath.as_ptr(), &mut handle) },
            Fs2sStatus::LoadFailed
        );

        let mut s: *mut c_char = ptr::null_mut();
        let input = CString::new("x").unwrap();
        assert_eq!(
            unsafe { fs2s_generate(ptr::null(), input.as_ptr(), &mut s) },
            Fs2sStatus::NullArgument
        );
        assert_eq!(unsafe { fs2s_model_rules(ptr::null()) }, 0);

        let version = unsafe { CStr::from_ptr(fs2s_version()) }.to_str().unwrap();
        assert!(!version.is_empty());
    }
}

//! C ABI over the summarizer.
//!
//! Every fallible function returns a [`BgsumStatus`] code; on failure the
//! message is available from [`bgsum_last_error`] on the same thread.
//! Strings handed out by this library must be released with
//! [`bgsum_string_free`], models with [`bgsum_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bgsum::baselines::{extract, BaselineMethod};
use bgsum::corpus::{parse_report, tokenize};
use bgsum::inference::{summarize_tokens, DecodeOptions};
use bgsum::model::Summarizer;
use bgsum::rouge::{rouge_l, rouge_n};
use bgsum::training::Checkpoint;
use bgsum::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BgsumStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Checkpoint = 4,
    MalformedRecord = 5,
    MissingSection = 6,
    AmbiguousSections = 7,
    EmptyFindings = 8,
    EmptyInput = 9,
    UnknownMethod = 10,
    InvalidArgument = 11,
    Numeric = 12,
    Panic = 13,
    Other = 14,
}

impl From<&Error> for BgsumStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => Self::Io,
            Error::Checkpoint(_) | Error::VocabMismatch { .. } => Self::Checkpoint,
            Error::MalformedRecord { .. } | Error::Json(_) => Self::MalformedRecord,
            Error::MissingSection(_) => Self::MissingSection,
            Error::AmbiguousSections(_) => Self::AmbiguousSections,
            Error::EmptyFindings | Error::EmptySequence => Self::EmptyFindings,
            Error::EmptyInput | Error::EmptyList => Self::EmptyInput,
            Error::UnknownMethod(_) => Self::UnknownMethod,
            Error::InvalidConfig(_) => Self::InvalidArgument,
            Error::Tensor(_) => Self::Numeric,
            _ => Self::Other,
        }
    }
}

/// ROUGE precision, recall and F1, each in [0, 1].
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BgsumRouge {
    pub rouge1_precision: f64,
    pub rouge1_recall: f64,
    pub rouge1_f1: f64,
    pub rouge2_precision: f64,
    pub rouge2_recall: f64,
    pub rouge2_f1: f64,
    pub rougel_precision: f64,
    pub rougel_recall: f64,
    pub rougel_f1: f64,
}

/// Opaque handle to a loaded model.
pub struct BgsumModel {
    inner: Summarizer,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(BgsumStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(BgsumStatus::from(&e), format!("{}: {e}", e.category()))
    }
}

fn guarded(f: impl FnOnce() -> Result<(), Failure>) -> BgsumStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BgsumStatus::Ok,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            BgsumStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(BgsumStatus::NullArgument, format!("{what} is null")));
    }
    // SAFETY: the caller passes a NUL-terminated string that outlives the call.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure(BgsumStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn hand_out(s: String, out: *mut *mut c_char) -> Result<(), Failure> {
    let c = CString::new(s)
        .map_err(|_| Failure(BgsumStatus::Other, "output contains a NUL byte".into()))?;
    // SAFETY: `out` was checked to be non-null by the caller of this helper.
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Loads a checkpoint file. On success `*out` owns a new model handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bgsum_model_load(path: *const c_char, out: *mut *mut BgsumModel) -> BgsumStatus {
    guarded(|| {
        if out.is_null() {
            return Err(Failure(BgsumStatus::NullArgument, "out is null".into()));
        }
        // SAFETY: forwarded caller contract.
        let path = unsafe { read_str(path, "path") }?;
        let ck = Checkpoint::load(path)?;
        let handle = Box::new(BgsumModel { inner: ck.model });
        // SAFETY: `out` is non-null and valid per the caller contract.
        unsafe { *out = Box::into_raw(handle) };
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`bgsum_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bgsum_model_free(model: *mut BgsumModel) {
    if !model.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Size of the model's base vocabulary, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bgsum_model_vocab_size(model: *const BgsumModel) -> usize {
    // SAFETY: caller contract.
    unsafe { model.as_ref() }.map_or(0, |m| m.inner.vocab.len())
}

/// Summarizes one report given as a JSON object with `id`, `body_part`,
/// `background`, `findings` and `impression` (the impression may be any
/// placeholder). A `beam` or `max_len` of 0 selects the default. On success
/// `*out` owns the summary string.
///
/// # Safety
/// `model` must be a live handle, `report_json` NUL-terminated and `out`
/// valid.
#[no_mangle]
pub unsafe extern "C" fn bgsum_summarize(
    model: *const BgsumModel,
    report_json: *const c_char,
    beam: u32,
    max_len: u32,
    out: *mut *mut c_char,
) -> BgsumStatus {
    guarded(|| {
        // SAFETY: caller contract.
        let model = unsafe { model.as_ref() }
            .ok_or_else(|| Failure(BgsumStatus::NullArgument, "model is null".into()))?;
        if out.is_null() {
            return Err(Failure(BgsumStatus::NullArgument, "out is null".into()));
        }
        // SAFETY: caller contract.
        let raw = unsafe { read_str(report_json, "report_json") }?;
        let report = parse_report(raw, 1)?;
        let defaults = DecodeOptions::default();
        let opts = DecodeOptions {
            beam: if beam == 0 { defaults.beam } else { beam as usize },
            max_len: if max_len == 0 { defaults.max_len } else { max_len as usize },
        };
        let tokens = summarize_tokens(&model.inner, &report, &opts)?;
        hand_out(tokens.join(" "), out)
    })
}

/// ROUGE-1, ROUGE-2 and ROUGE-L of two texts after the corpus tokenizer.
///
/// # Safety
/// Both strings must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn bgsum_rouge(
    candidate: *const c_char,
    reference: *const c_char,
    out: *mut BgsumRouge,
) -> BgsumStatus {
    guarded(|| {
        if out.is_null() {
            return Err(Failure(BgsumStatus::NullArgument, "out is null".into()));
        }
        // SAFETY: caller contract.
        let c = tokenize(unsafe { read_str(candidate, "candidate") }?);
        // SAFETY: caller contract.
        let r = tokenize(unsafe { read_str(reference, "reference") }?);
        let (r1, r2, rl) = (rouge_n(&c, &r, 1), rouge_n(&c, &r, 2), rouge_l(&c, &r));
        let scores = BgsumRouge {
            rouge1_precision: r1.precision,
            rouge1_recall: r1.recall,
            rouge1_f1: r1.f1,
            rouge2_precision: r2.precision,
            rouge2_recall: r2.recall,
            rouge2_f1: r2.f1,
            rougel_precision: rl.precision,
            rougel_recall: rl.recall,
            rougel_f1: rl.f1,
        };
        // SAFETY: `out` is non-null and valid per the caller contract.
        unsafe { *out = scores };
        Ok(())
    })
}

/// Extractive summary of a findings text: `method` is "lexrank" or "lsa",
/// `n` the number of sentences. On success `*out` owns the summary string.
///
/// # Safety
/// Strings must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn bgsum_baseline(
    method: *const c_char,
    findings: *const c_char,
    n: u32,
    out: *mut *mut c_char,
) -> BgsumStatus {
    guarded(|| {
        if out.is_null() {
            return Err(Failure(BgsumStatus::NullArgument, "out is null".into()));
        }
        // SAFETY: caller contract.
        let method: BaselineMethod = unsafe { read_str(method, "method") }?.parse()?;
        // SAFETY: caller contract.
        let tokens = tokenize(unsafe { read_str(findings, "findings") }?);
        let picked = extract(method, &tokens, n as usize)?;
        hand_out(picked.join(" "), out)
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bgsum_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: the pointer was produced by `CString::into_raw`.
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn bgsum_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

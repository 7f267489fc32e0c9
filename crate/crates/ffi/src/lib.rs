//! C interface to crowdtag.
//!
//! Models and corpora live behind opaque handles that the caller releases
//! with the matching `_free` function. Every fallible call returns a
//! [`CrowdtagStatus`]; on failure a description is available from
//! [`crowdtag_last_error`] until the next failing call on the same thread.
//! Strings handed out by the library are released with
//! [`crowdtag_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use crowdtag::cli::{cmd_simulate, load_split, CliError, Exit, SimulateArgs};
use crowdtag::corpus::CrowdCorpus;
use crowdtag::model::{load_checkpoint, AnnotatorInput, ModelError, TaggerModel};
use crowdtag::train::{evaluate_model, Reference};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrowdtagStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Data = 4,
    Model = 5,
    UnknownAnnotator = 6,
    Config = 7,
    Panic = 8,
}

/// A loaded checkpoint.
pub struct CrowdtagModel {
    model: TaggerModel,
}

/// One loaded corpus split.
pub struct CrowdtagCorpus {
    corpus: CrowdCorpus,
}

struct Failure(CrowdtagStatus, String);

impl From<CliError> for Failure {
    fn from(e: CliError) -> Self {
        let status = match e.exit() {
            Exit::Io => CrowdtagStatus::Io,
            Exit::Data => CrowdtagStatus::Data,
            Exit::UnknownAnnotator => CrowdtagStatus::UnknownAnnotator,
            Exit::Usage | Exit::Config => CrowdtagStatus::Config,
            Exit::Ok | Exit::Model | Exit::Train => CrowdtagStatus::Model,
        };
        Failure(status, e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        CliError::from(e).into()
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CrowdtagStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CrowdtagStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CrowdtagStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(CrowdtagStatus::NullArgument, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CrowdtagStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn optional_text<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

unsafe fn put_string(out: *mut *mut c_char, s: String) {
    *out = CString::new(s).expect("JSON has no nul bytes").into_raw();
}

fn annotator_input(model: &TaggerModel, annotator: Option<&str>) -> Result<AnnotatorInput, Failure> {
    match annotator {
        None => Ok(AnnotatorInput::Expert),
        Some(id) => model.annotator_index(id).map(AnnotatorInput::Annotator).map_err(Failure::from),
    }
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn crowdtag_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn crowdtag_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn crowdtag_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn crowdtag_model_load(path: *const c_char, out: *mut *mut CrowdtagModel) -> CrowdtagStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = load_checkpoint(&PathBuf::from(text(path, "path")?))?;
        put(out, CrowdtagModel { model });
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`crowdtag_model_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn crowdtag_model_free(model: *mut CrowdtagModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of annotators the model knows, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn crowdtag_model_annotator_count(model: *const CrowdtagModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.registry.len())
}

/// Tags a whitespace-tokenized sentence. `annotator` selects an annotator
/// embedding; null means the expert centroid. `out_json` receives a JSON
/// array of `{"start", "end", "polarity"}` spans, end exclusive.
///
/// # Safety
/// Pointers must be valid; `annotator` may be null.
#[no_mangle]
pub unsafe extern "C" fn crowdtag_model_predict(
    model: *const CrowdtagModel,
    sentence: *const c_char,
    annotator: *const c_char,
    out_json: *mut *mut c_char,
) -> CrowdtagStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.model;
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let tokens: Vec<String> = text(sentence, "sentence")?.split_whitespace().map(String::from).collect();
        let input = annotator_input(m, optional_text(annotator, "annotator")?)?;
        let spans = m.predict_spans(&tokens, &input)?;
        put_string(out_json, serde_json::to_string(&spans).expect("spans serialize"));
        Ok(())
    })
}

/// Loads `<dir>/<split>.jsonl`, with the directory's annotator registry
/// when present.
///
/// # Safety
/// `dir` and `split` must be nul-terminated strings, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn crowdtag_corpus_load(dir: *const c_char, split: *const c_char, out: *mut *mut CrowdtagCorpus) -> CrowdtagStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let corpus = load_split(&PathBuf::from(text(dir, "dir")?), text(split, "split")?)?;
        put(out, CrowdtagCorpus { corpus });
        Ok(())
    })
}

/// # Safety
/// `corpus` must come from [`crowdtag_corpus_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn crowdtag_corpus_free(corpus: *mut CrowdtagCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Number of sentences, or 0 for a null handle.
///
/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn crowdtag_corpus_len(corpus: *const CrowdtagCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.corpus.len())
}

/// Scores the model on a corpus and writes the report as JSON.
///
/// A null `annotator` evaluates the expert centroid against gold. With an
/// annotator id the predictions are scored against gold when
/// `against_gold` is set and against that annotator's own labels
/// otherwise.
///
/// # Safety
/// Pointers must be valid; `annotator` may be null.
#[no_mangle]
pub unsafe extern "C" fn crowdtag_evaluate(
    model: *const CrowdtagModel,
    corpus: *const CrowdtagCorpus,
    annotator: *const c_char,
    against_gold: bool,
    out_json: *mut *mut c_char,
) -> CrowdtagStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.model;
        let c = &corpus.as_ref().ok_or_else(|| null("corpus"))?.corpus;
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let annotator = optional_text(annotator, "annotator")?;
        let input = annotator_input(m, annotator)?;
        let reference = match annotator {
            Some(id) if !against_gold => Reference::Crowd(id.to_string()),
            _ => Reference::Gold,
        };
        let evaluated = evaluate_model(m, c, &input, &reference).map_err(|e| Failure::from(CliError::from(e)))?;
        let (report, _) = evaluated.ok_or_else(|| Failure(CrowdtagStatus::Data, "corpus has no reference labels to score against".into()))?;
        put_string(out_json, serde_json::to_string(&report).expect("report serializes"));
        Ok(())
    })
}

/// Writes a simulated corpus to `out_dir`, as the `simulate` command does.
/// A null `config_path` uses the default noisy benchmark.
///
/// # Safety
/// `out_dir` must be a nul-terminated string; `config_path` may be null.
#[no_mangle]
pub unsafe extern "C" fn crowdtag_simulate(config_path: *const c_char, seed: u64, out_dir: *const c_char) -> CrowdtagStatus {
    guard(|| {
        let args = SimulateArgs {
            config: optional_text(config_path, "config_path")?.map(PathBuf::from),
            seed: Some(seed),
            out: PathBuf::from(text(out_dir, "out_dir")?),
        };
        Ok(cmd_simulate(&args)?)
    })
}

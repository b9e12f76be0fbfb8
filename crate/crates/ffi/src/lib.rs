//! C ABI over the stateshift toolkit.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free`. Every fallible call returns an [`SsStatus`]; on failure
//! the message is available from [`ss_last_error`] on the same thread.
//! Strings handed out by the library are released with [`ss_string_free`].
//! Structured results are JSON documents.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use stateshift::corpus::{load_dataset, parse_dataset, AttributeVocabulary, DatasetFormat, Instance, LoadOptions, ParseMode};
use stateshift::metrics::{micro_prf, PredictionRecord, ScoreOptions};
use stateshift::prompts::{make_partition, parse_output, render_multi, render_single, render_zero, PromptRequest};
use stateshift::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Malformed = 3,
    UnknownAttribute = 4,
    Invalid = 5,
    ConflictingVerdict = 6,
    Io = 7,
    OutOfRange = 8,
    Internal = 9,
}

/// Attribute vocabulary handle.
pub struct SsVocabulary(AttributeVocabulary);

/// Loaded instances plus the vocabulary they were checked against.
pub struct SsDataset {
    instances: Vec<Instance>,
    vocabulary: AttributeVocabulary,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Malformed { .. } | Error::Json(_) | Error::DuplicateId(_) => SsStatus::Malformed,
            Error::UnknownAttribute(_) => SsStatus::UnknownAttribute,
            Error::ConflictingVerdict { .. } => SsStatus::ConflictingVerdict,
            Error::Io { .. } => SsStatus::Io,
            _ => SsStatus::Invalid,
        };
        Failure(status, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(SsStatus::Malformed, e.to_string())
    }
}

fn set_error(msg: Option<String>) {
    let msg = msg.map(|m| CString::new(m.replace('\0', " ")).unwrap_or_default());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = msg);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(None);
            SsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(Some(msg));
            status
        }
        Err(_) => {
            set_error(Some("internal panic".into()));
            SsStatus::Internal
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(SsStatus::NullArgument, format!("`{what}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SsStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(SsStatus::NullArgument, format!("`{what}` is null")))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(SsStatus::NullArgument, "output pointer is null".into()));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|e| Failure(SsStatus::Internal, e.to_string()))?;
    put(out, c.into_raw())
}

/// Message for the last failed call on this thread, or null after a
/// success. Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn ss_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ss_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Built-in vocabulary: `"openpi"` or `"piglet"`.
///
/// # Safety
/// `name` must be a valid C string; `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_vocabulary_builtin(name: *const c_char, out: *mut *mut SsVocabulary) -> SsStatus {
    guard(|| {
        let vocab = match text(name, "name")? {
            "openpi" => AttributeVocabulary::openpi(),
            "piglet" => AttributeVocabulary::piglet(),
            other => return Err(Failure(SsStatus::Invalid, format!("unknown vocabulary `{other}`"))),
        };
        put(out, Box::into_raw(Box::new(SsVocabulary(vocab))))
    })
}

/// Vocabulary from an `attribute<TAB>domain` table and optional merge table
/// (`raw<TAB>canonical`, may be null).
///
/// # Safety
/// String arguments must be valid C strings or null where allowed.
#[no_mangle]
pub unsafe extern "C" fn ss_vocabulary_from_tables(
    table: *const c_char,
    merge: *const c_char,
    out: *mut *mut SsVocabulary,
) -> SsStatus {
    guard(|| {
        let table = text(table, "table")?;
        let merge = if merge.is_null() { None } else { Some(text(merge, "merge")?) };
        let vocab = AttributeVocabulary::from_tables(table, merge)?;
        put(out, Box::into_raw(Box::new(SsVocabulary(vocab))))
    })
}

/// # Safety
/// `v` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ss_vocabulary_free(v: *mut SsVocabulary) {
    if !v.is_null() {
        drop(Box::from_raw(v));
    }
}

/// Number of canonical attributes; 0 for null.
///
/// # Safety
/// `v` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_vocabulary_len(v: *const SsVocabulary) -> usize {
    v.as_ref().map_or(0, |v| v.0.len())
}

/// Canonical name for a raw surface form.
///
/// # Safety
/// `v` must be a live handle, `raw` a valid C string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ss_vocabulary_canonicalize(
    v: *const SsVocabulary,
    raw: *const c_char,
    out: *mut *mut c_char,
) -> SsStatus {
    guard(|| {
        let name = handle(v, "vocabulary")?.0.canonicalize(text(raw, "raw")?)?;
        put_string(out, name)
    })
}

fn dataset_options(v: &SsVocabulary, lenient: bool) -> LoadOptions {
    let options = LoadOptions::new(v.0.clone());
    if lenient {
        options.lenient()
    } else {
        options
    }
}

fn format_of(s: &str) -> Result<DatasetFormat, Failure> {
    s.parse::<DatasetFormat>().map_err(|e| Failure(SsStatus::Invalid, e.to_string()))
}

/// Loads a dataset file in `format` (`canonical_jsonl`, `openpi_raw`,
/// `piglet_raw`). The vocabulary handle is copied, not consumed.
///
/// # Safety
/// Pointers must be valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ss_dataset_load(
    path: *const c_char,
    format: *const c_char,
    v: *const SsVocabulary,
    lenient: bool,
    out: *mut *mut SsDataset,
) -> SsStatus {
    guard(|| {
        let options = dataset_options(handle(v, "vocabulary")?, lenient);
        let data = load_dataset(Path::new(text(path, "path")?), format_of(text(format, "format")?)?, &options)?;
        put(out, Box::into_raw(Box::new(SsDataset { instances: data.instances, vocabulary: data.vocabulary })))
    })
}

/// Like [`ss_dataset_load`] but from in-memory text.
///
/// # Safety
/// Pointers must be valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ss_dataset_parse(
    data: *const c_char,
    format: *const c_char,
    v: *const SsVocabulary,
    lenient: bool,
    out: *mut *mut SsDataset,
) -> SsStatus {
    guard(|| {
        let options = dataset_options(handle(v, "vocabulary")?, lenient);
        let data = parse_dataset(text(data, "data")?, Path::new("<memory>"), format_of(text(format, "format")?)?, &options)?;
        put(out, Box::into_raw(Box::new(SsDataset { instances: data.instances, vocabulary: data.vocabulary })))
    })
}

/// # Safety
/// `d` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ss_dataset_free(d: *mut SsDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Number of instances; 0 for null.
///
/// # Safety
/// `d` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_dataset_len(d: *const SsDataset) -> usize {
    d.as_ref().map_or(0, |d| d.instances.len())
}

/// Renders a prompt for instance `index`. `strategy` is `zero`, `single`
/// or `multi`; `attributes` is a comma-separated list (ignored for `zero`,
/// exactly one name for `single`). Writes the request as JSON.
///
/// # Safety
/// Pointers must be valid; `attributes` may be null for `zero`.
#[no_mangle]
pub unsafe extern "C" fn ss_render(
    d: *const SsDataset,
    index: usize,
    strategy: *const c_char,
    attributes: *const c_char,
    out_json: *mut *mut c_char,
) -> SsStatus {
    guard(|| {
        let d = handle(d, "dataset")?;
        let inst = d.instances.get(index).ok_or_else(|| {
            Failure(SsStatus::OutOfRange, format!("index {index} out of range for {} instances", d.instances.len()))
        })?;
        let strategy = text(strategy, "strategy")?;
        let attrs: Vec<String> = if attributes.is_null() {
            Vec::new()
        } else {
            text(attributes, "attributes")?
                .split(',')
                .map(str::trim)
                .filter(|a| !a.is_empty())
                .map(|a| d.vocabulary.canonicalize(a))
                .collect::<Result<_, _>>()?
        };
        let request = match (strategy, attrs.as_slice()) {
            ("zero", _) => render_zero(inst),
            ("single", [one]) => render_single(inst, one),
            ("single", _) => return Err(Failure(SsStatus::Invalid, "single prompts take exactly one attribute".into())),
            ("multi", _) => render_multi(inst, &attrs)?,
            (other, _) => return Err(Failure(SsStatus::Invalid, format!("unknown strategy `{other}`"))),
        };
        put_string(out_json, serde_json::to_string(&request)?)
    })
}

/// Parses model output against a request (JSON as produced by
/// [`ss_render`]). Writes the parsed output as JSON.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ss_parse_output(
    v: *const SsVocabulary,
    request_json: *const c_char,
    output: *const c_char,
    lenient: bool,
    out_json: *mut *mut c_char,
) -> SsStatus {
    guard(|| {
        let request: PromptRequest = serde_json::from_str(text(request_json, "request_json")?)?;
        let mode = if lenient { ParseMode::Lenient } else { ParseMode::Strict };
        let parsed = parse_output(text(output, "output")?, &request, &handle(v, "vocabulary")?.0, mode)?;
        put_string(out_json, serde_json::to_string(&parsed)?)
    })
}

/// Seeded partition of the vocabulary's attributes for one instance.
/// Writes the plan as JSON.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ss_partition(
    v: *const SsVocabulary,
    instance_id: *const c_char,
    seed: u64,
    out_json: *mut *mut c_char,
) -> SsStatus {
    guard(|| {
        let plan = make_partition(text(instance_id, "instance_id")?, handle(v, "vocabulary")?.0.names(), seed)?;
        put_string(out_json, serde_json::to_string(&plan)?)
    })
}

/// Micro precision/recall/F1 of prediction records (JSON lines) against
/// the dataset's gold labels. Writes `{tp, fp, fn, precision, recall, f1}`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ss_micro_score(
    d: *const SsDataset,
    records_jsonl: *const c_char,
    out_json: *mut *mut c_char,
) -> SsStatus {
    guard(|| {
        let d = handle(d, "dataset")?;
        let records: Vec<PredictionRecord> = text(records_jsonl, "records_jsonl")?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        let scored = micro_prf(&records, &d.instances, &ScoreOptions::default())?;
        put_string(out_json, serde_json::to_string(&scored)?)
    })
}

//! C ABI over the triple-score engine.
//!
//! An engine is opened from a corpus index and a model bundle and scores one
//! triple per call. Every function returns a [`TsStatus`]; on failure the
//! message is kept per thread and read with [`ts_last_error_message`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use libc::{c_char, size_t};

use triple_score::eval::{accuracy, avg_score_diff, kendall_tau_b};
use triple_score::scorer::{score_triple, ScoringModel};
use triple_score::{CorpusIndex, Error, RelationType};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    UnknownRelation = 6,
    UnknownEntity = 7,
    Undefined = 8,
    InsufficientData = 9,
    Config = 10,
    Panic = 11,
}

impl From<&Error> for TsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => TsStatus::Io,
            Error::Parse { .. } | Error::BadLines { .. } => TsStatus::Parse,
            Error::UnknownRelation(_) | Error::RelationNotModelled(_) => TsStatus::UnknownRelation,
            Error::UnknownEntity { .. } => TsStatus::UnknownEntity,
            Error::UndefinedCoverage
            | Error::UndefinedSimilarity
            | Error::UndefinedTau(_)
            | Error::UndefinedMetric(_) => TsStatus::Undefined,
            Error::InsufficientData(_) | Error::EmptyVocabulary(_) => TsStatus::InsufficientData,
            Error::Config(_) => TsStatus::Config,
            _ => TsStatus::Validation,
        }
    }
}

/// A loaded corpus index and scoring model. Opaque to C.
pub struct TsEngine {
    model: ScoringModel,
    index: CorpusIndex,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: TsStatus, message: impl Into<String>) -> TsStatus {
    set_error(message.into());
    status
}

fn guard(f: impl FnOnce() -> TsStatus) -> TsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(TsStatus::Panic, "internal panic"),
    }
}

fn from_result<T>(r: triple_score::Result<T>, out: impl FnOnce(T)) -> TsStatus {
    match r {
        Ok(v) => {
            out(v);
            TsStatus::Ok
        }
        Err(e) => fail(TsStatus::from(&e), e.to_string()),
    }
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, TsStatus> {
    if p.is_null() {
        return Err(fail(TsStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(TsStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

/// # Safety
/// Non-null pointers must reference `len` readable bytes.
unsafe fn scores_arg<'a>(p: *const u8, len: size_t, name: &str) -> Result<&'a [u8], TsStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(TsStatus::NullArgument, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Opens an engine from an `index.json` file and a model bundle directory.
/// On success `*out` owns the engine; release it with [`ts_engine_free`].
///
/// # Safety
/// Path arguments are NUL-terminated strings; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_engine_open(
    index_path: *const c_char,
    model_dir: *const c_char,
    out: *mut *mut TsEngine,
) -> TsStatus {
    guard(|| {
        if out.is_null() {
            return fail(TsStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let index_path = tri!(str_arg(index_path, "index_path"));
        let model_dir = tri!(str_arg(model_dir, "model_dir"));
        let opened = CorpusIndex::load(Path::new(index_path)).and_then(|index| {
            let model = ScoringModel::load(Path::new(model_dir))?;
            Ok(TsEngine { model, index })
        });
        from_result(opened, |engine| *out = Box::into_raw(Box::new(engine)))
    })
}

/// Scores one triple. `relation` is `"profession"` or `"nationality"` and
/// `entity` a canonical lexicon entry.
///
/// # Safety
/// `engine` comes from [`ts_engine_open`]; strings are NUL-terminated;
/// `out_score` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_engine_score(
    engine: *const TsEngine,
    person_id: *const c_char,
    relation: *const c_char,
    entity: *const c_char,
    out_score: *mut u8,
) -> TsStatus {
    guard(|| {
        if engine.is_null() || out_score.is_null() {
            return fail(TsStatus::NullArgument, "engine or out_score is null");
        }
        let engine = &*engine;
        let person_id = tri!(str_arg(person_id, "person_id"));
        let relation = tri!(str_arg(relation, "relation"));
        let entity = tri!(str_arg(entity, "entity"));
        let scored = relation
            .parse::<RelationType>()
            .and_then(|rel| score_triple(person_id, rel, entity, &engine.model, &engine.index));
        from_result(scored, |s| *out_score = s)
    })
}

/// Releases an engine. Null is ignored.
///
/// # Safety
/// `engine` is null or came from [`ts_engine_open`] and is not used again.
#[no_mangle]
pub unsafe extern "C" fn ts_engine_free(engine: *mut TsEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`) and returns the full message length
/// without the terminator. Returns 0 when there is no error.
///
/// # Safety
/// `buf` is null or points to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ts_last_error_message(buf: *mut c_char, len: size_t) -> size_t {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

fn metric(
    pred: &[u8],
    truth: &[u8],
    f: fn(&[u8], &[u8]) -> triple_score::Result<f64>,
    out: *mut f64,
) -> TsStatus {
    if out.is_null() {
        return fail(TsStatus::NullArgument, "out is null");
    }
    // SAFETY: checked non-null above; the caller guarantees validity.
    from_result(f(pred, truth), |v| unsafe { *out = v })
}

/// Fraction of positions where the scores differ by at most 2.
///
/// # Safety
/// `pred` and `truth` point to `len` bytes; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_accuracy(pred: *const u8, truth: *const u8, len: size_t, out: *mut f64) -> TsStatus {
    guard(|| {
        let pred = tri!(scores_arg(pred, len, "pred"));
        let truth = tri!(scores_arg(truth, len, "truth"));
        metric(pred, truth, accuracy, out)
    })
}

/// Mean absolute score difference.
///
/// # Safety
/// As for [`ts_accuracy`].
#[no_mangle]
pub unsafe extern "C" fn ts_avg_score_diff(
    pred: *const u8,
    truth: *const u8,
    len: size_t,
    out: *mut f64,
) -> TsStatus {
    guard(|| {
        let pred = tri!(scores_arg(pred, len, "pred"));
        let truth = tri!(scores_arg(truth, len, "truth"));
        metric(pred, truth, avg_score_diff, out)
    })
}

/// Kendall tau-b of two score lists. Returns `Undefined` for fewer than two
/// items or an all-tied list.
///
/// # Safety
/// As for [`ts_accuracy`].
#[no_mangle]
pub unsafe extern "C" fn ts_kendall_tau_b(a: *const u8, b: *const u8, len: size_t, out: *mut f64) -> TsStatus {
    guard(|| {
        let a = tri!(scores_arg(a, len, "a"));
        let b = tri!(scores_arg(b, len, "b"));
        metric(a, b, kendall_tau_b::<u8>, out)
    })
}

/// The library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ts_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

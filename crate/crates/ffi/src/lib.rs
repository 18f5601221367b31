//! C ABI over the scoring pipeline: opaque handles, integer status codes,
//! and a thread-local last-error message. The committed header lives at
//! `include/credscope.h` and is maintained by hand; keep the two in sync.
//!
//! Conventions: constructors write a handle through an out pointer and the
//! caller frees it with the matching `_free`; every function returns
//! `CREDSCOPE_OK` (0) on success; string buffers receive NUL-terminated
//! UTF-8 and report the required size through `written`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use credscope_core::error::Error;
use credscope_core::features::FeatureImage;
use credscope_core::lda::TopicModel;
use credscope_core::lexicon::{extract_bag, load_lexicon, BagOfWords, Lexicon};
use credscope_core::network::forward;
use credscope_core::training::{normalize_article_count, Checkpoint};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CredscopeStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    IoError = 3,
    ParseError = 4,
    OutOfRange = 5,
    BufferTooSmall = 6,
    InternalError = 7,
}

pub struct CredscopeLexicon(Lexicon);
pub struct CredscopeBag(BagOfWords);
pub struct CredscopeModel(TopicModel);
pub struct CredscopeCheckpoint(Checkpoint);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let cstring = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn status_of(err: &Error) -> CredscopeStatus {
    match err {
        Error::Io(_) => CredscopeStatus::IoError,
        Error::InvalidUtf8 { .. } => CredscopeStatus::InvalidUtf8,
        Error::OutOfRange { .. } => CredscopeStatus::OutOfRange,
        Error::Parse { .. }
        | Error::EmptyLexicon
        | Error::Artifact { .. }
        | Error::DuplicateId { .. } => CredscopeStatus::ParseError,
        Error::ShapeMismatch { .. } => CredscopeStatus::OutOfRange,
        _ => CredscopeStatus::InternalError,
    }
}

fn fail(err: &Error) -> CredscopeStatus {
    set_error(&err.to_string());
    status_of(err)
}

/// Runs a fallible body, converting panics into `InternalError` instead of
/// unwinding across the boundary.
fn guarded(body: impl FnOnce() -> CredscopeStatus) -> CredscopeStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            CredscopeStatus::InternalError
        }
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, CredscopeStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(CredscopeStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8");
        CredscopeStatus::InvalidUtf8
    })
}

fn write_str(value: &str, buf: *mut c_char, buf_len: usize, written: *mut usize) -> CredscopeStatus {
    let bytes = value.as_bytes();
    let needed = bytes.len() + 1;
    if !written.is_null() {
        unsafe { *written = needed };
    }
    if buf.is_null() || buf_len < needed {
        set_error("buffer too small");
        return CredscopeStatus::BufferTooSmall;
    }
    unsafe {
        std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, bytes.len());
        *buf.add(bytes.len()) = 0;
    }
    CredscopeStatus::Ok
}

/// Crate version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn credscope_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the last error message of this thread into `buf`; returns the
/// size the message needs (including NUL), or 0 when no error is recorded.
#[no_mangle]
pub extern "C" fn credscope_last_error(buf: *mut c_char, buf_len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let slot = slot.borrow();
        let Some(msg) = slot.as_ref() else {
            return 0;
        };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && buf_len >= bytes.len() {
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, bytes.len());
            }
        }
        bytes.len()
    })
}

/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn credscope_lexicon_load(
    path: *const c_char,
    out: *mut *mut CredscopeLexicon,
) -> CredscopeStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null out pointer");
            return CredscopeStatus::NullArgument;
        }
        let path = match cstr_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) => return fail(&Error::Io(e)),
        };
        match load_lexicon(BufReader::new(file)) {
            Ok(lex) => {
                *out = Box::into_raw(Box::new(CredscopeLexicon(lex)));
                CredscopeStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// # Safety
/// `lex` must be a live handle from `credscope_lexicon_load`.
#[no_mangle]
pub unsafe extern "C" fn credscope_lexicon_term_count(
    lex: *const CredscopeLexicon,
    out: *mut u64,
) -> CredscopeStatus {
    guarded(|| {
        if lex.is_null() || out.is_null() {
            set_error("null argument");
            return CredscopeStatus::NullArgument;
        }
        *out = (*lex).0.len() as u64;
        CredscopeStatus::Ok
    })
}

/// # Safety
/// `lex` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn credscope_lexicon_free(lex: *mut CredscopeLexicon) {
    if !lex.is_null() {
        drop(Box::from_raw(lex));
    }
}

/// # Safety
/// `lex` must be live, `text` a valid NUL-terminated string, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn credscope_bag_extract(
    lex: *const CredscopeLexicon,
    text: *const c_char,
    out: *mut *mut CredscopeBag,
) -> CredscopeStatus {
    guarded(|| {
        if lex.is_null() || out.is_null() {
            set_error("null argument");
            return CredscopeStatus::NullArgument;
        }
        let text = match cstr_arg(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let bag = extract_bag(text, &(*lex).0);
        *out = Box::into_raw(Box::new(CredscopeBag(bag)));
        CredscopeStatus::Ok
    })
}

/// # Safety
/// `bag` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn credscope_bag_total(
    bag: *const CredscopeBag,
    out: *mut u64,
) -> CredscopeStatus {
    guarded(|| {
        if bag.is_null() || out.is_null() {
            set_error("null argument");
            return CredscopeStatus::NullArgument;
        }
        *out = (*bag).0.total();
        CredscopeStatus::Ok
    })
}

/// # Safety
/// `bag` must be live and `term` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn credscope_bag_count(
    bag: *const CredscopeBag,
    term: *const c_char,
    out: *mut u64,
) -> CredscopeStatus {
    guarded(|| {
        if bag.is_null() || out.is_null() {
            set_error("null argument");
            return CredscopeStatus::NullArgument;
        }
        let term = match cstr_arg(term) {
            Ok(t) => t,
            Err(s) => return s,
        };
        *out = (*bag).0.count(term);
        CredscopeStatus::Ok
    })
}

/// # Safety
/// `bag` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn credscope_bag_free(bag: *mut CredscopeBag) {
    if !bag.is_null() {
        drop(Box::from_raw(bag));
    }
}

/// Loads a fitted topic model dump.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn credscope_model_load(
    path: *const c_char,
    out: *mut *mut CredscopeModel,
) -> CredscopeStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null out pointer");
            return CredscopeStatus::NullArgument;
        }
        let path = match cstr_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) => return fail(&Error::Io(e)),
        };
        match TopicModel::read_from(BufReader::new(file), path) {
            Ok((model, _hash)) => {
                *out = Box::into_raw(Box::new(CredscopeModel(model)));
                CredscopeStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn credscope_model_topic_count(
    model: *const CredscopeModel,
    out: *mut u32,
) -> CredscopeStatus {
    guarded(|| {
        if model.is_null() || out.is_null() {
            set_error("null argument");
            return CredscopeStatus::NullArgument;
        }
        *out = (*model).0.topics as u32;
        CredscopeStatus::Ok
    })
}

/// Copies the `rank`-th keyword (0-based, by descending probability) of
/// `topic` into `buf` as NUL-terminated UTF-8.
///
/// # Safety
/// `model` must be live; `buf`/`written` follow the buffer convention.
#[no_mangle]
pub unsafe extern "C" fn credscope_model_keyword(
    model: *const CredscopeModel,
    topic: u32,
    rank: u32,
    buf: *mut c_char,
    buf_len: usize,
    written: *mut usize,
) -> CredscopeStatus {
    guarded(|| {
        if model.is_null() {
            set_error("null model");
            return CredscopeStatus::NullArgument;
        }
        let model = &(*model).0;
        match model.top_keywords(topic as usize, rank as usize + 1) {
            Ok(keywords) => {
                let term = keywords.last().expect("rank+1 keywords requested");
                write_str(term, buf, buf_len, written)
            }
            Err(e) => fail(&e),
        }
    })
}

/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn credscope_model_free(model: *mut CredscopeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Loads a trained network checkpoint.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn credscope_checkpoint_load(
    path: *const c_char,
    out: *mut *mut CredscopeCheckpoint,
) -> CredscopeStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null out pointer");
            return CredscopeStatus::NullArgument;
        }
        let path = match cstr_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) => return fail(&Error::Io(e)),
        };
        match Checkpoint::read_from(BufReader::new(file), path) {
            Ok((ckpt, _hash)) => {
                *out = Box::into_raw(Box::new(CredscopeCheckpoint(ckpt)));
                CredscopeStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Number of f64 pixels the checkpoint expects per feature image.
///
/// # Safety
/// `ckpt` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn credscope_checkpoint_image_len(
    ckpt: *const CredscopeCheckpoint,
    out: *mut usize,
) -> CredscopeStatus {
    guarded(|| {
        if ckpt.is_null() || out.is_null() {
            set_error("null argument");
            return CredscopeStatus::NullArgument;
        }
        *out = (*ckpt).0.hyper.image_len();
        CredscopeStatus::Ok
    })
}

/// Scores one company from its row-major feature image and raw mentioning
/// article count; the result lands in (0, 1).
///
/// # Safety
/// `ckpt` must be live and `pixels` must point at `pixel_count` doubles.
#[no_mangle]
pub unsafe extern "C" fn credscope_checkpoint_score(
    ckpt: *const CredscopeCheckpoint,
    pixels: *const f64,
    pixel_count: usize,
    article_count: u64,
    out_score: *mut f64,
) -> CredscopeStatus {
    guarded(|| {
        if ckpt.is_null() || pixels.is_null() || out_score.is_null() {
            set_error("null argument");
            return CredscopeStatus::NullArgument;
        }
        let ckpt = &(*ckpt).0;
        if pixel_count != ckpt.hyper.image_len() {
            return fail(&Error::ShapeMismatch {
                expected: format!("{} pixels", ckpt.hyper.image_len()),
                got: format!("{pixel_count} pixels"),
            });
        }
        let image = FeatureImage {
            rows: ckpt.hyper.image_rows,
            pixels: std::slice::from_raw_parts(pixels, pixel_count).to_vec(),
        };
        let data1_norm = normalize_article_count(article_count, ckpt.article_cap);
        match forward(&ckpt.params, &image, data1_norm) {
            Ok(trace) => {
                *out_score = trace.score;
                CredscopeStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// # Safety
/// `ckpt` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn credscope_checkpoint_free(ckpt: *mut CredscopeCheckpoint) {
    if !ckpt.is_null() {
        drop(Box::from_raw(ckpt));
    }
}

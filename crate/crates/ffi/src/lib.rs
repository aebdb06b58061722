//! C ABI for the cvrank ranking engine.
//!
//! Every function returns a [`CvrStatus`]; on failure a message for the
//! calling thread is available from [`cvr_last_error_message`]. Strings are
//! NUL-terminated UTF-8. Engines are opaque and must be released with
//! [`cvr_engine_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use cvrank::engine::{CvSequence, CycleConfig, EngineError, RankEngine};
use cvrank::fen::{parse_fen, FenError, FenRecord};
use cvrank::metric::{change_value, ChangeMetric, PaddedBytes};
use cvrank::stats::{welch_ttest, StatsError};
use cvrank::store::{resolve_flips, Label, Store, StoreError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    MalformedFen = 3,
    IllegalPosition = 4,
    Io = 5,
    Data = 6,
    /// The databases are too small for the configured sample sizes.
    Method = 7,
    InvalidArgument = 8,
    Panic = 9,
}

/// Result of a two-tailed Welch t-test.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CvrTTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub significant: bool,
}

/// Opaque ranking engine over a liked and a disliked database.
pub struct CvrEngine {
    liked: CvSequence,
    disliked: CvSequence,
    config: CycleConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(CvrStatus, String);

impl From<FenError> for Failure {
    fn from(e: FenError) -> Self {
        let status = match e {
            FenError::Malformed(_) => CvrStatus::MalformedFen,
            FenError::IllegalPosition(_) => CvrStatus::IllegalPosition,
        };
        Failure(status, e.to_string())
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::FileNotFound(_) | StoreError::Io { .. } | StoreError::StoreMissing(..) => {
                CvrStatus::Io
            }
            _ => CvrStatus::Data,
        };
        Failure(status, e.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let status = match e {
            EngineError::InvalidConfig(_) => CvrStatus::InvalidArgument,
            EngineError::NoCandidates | EngineError::EmptyDatabase(_) => CvrStatus::Data,
            _ => CvrStatus::Method,
        };
        Failure(status, e.to_string())
    }
}

impl From<StatsError> for Failure {
    fn from(e: StatsError) -> Self {
        Failure(CvrStatus::InvalidArgument, e.to_string())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CvrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            CvrStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            CvrStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(CvrStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CvrStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn fen_arg(p: *const c_char, what: &str) -> Result<FenRecord, Failure> {
    Ok(parse_fen(str_arg(p, what)?)?)
}

/// # Safety
/// `p` must be null or valid for `n` reads.
unsafe fn slice_arg<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return if n == 0 { Ok(&[]) } else { Err(null(what)) };
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Message for the last failed call on this thread, or null after a
/// success. Valid until the next cvr_* call on the same thread.
#[no_mangle]
pub extern "C" fn cvr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Check that `fen` is a well-formed, legal position.
///
/// # Safety
/// `fen` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cvr_fen_validate(fen: *const c_char) -> CvrStatus {
    guard(|| fen_arg(fen, "fen").map(|_| ()))
}

/// Change value between two positions, in percent of the 128-byte buffer.
///
/// # Safety
/// `a` and `b` must be valid NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvr_change_value(
    a: *const c_char,
    b: *const c_char,
    out: *mut f64,
) -> CvrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (a, b) = (fen_arg(a, "a")?, fen_arg(b, "b")?);
        *out = change_value(&a, &b).value();
        Ok(())
    })
}

/// Two-tailed Welch t-test of `a` against `b`.
///
/// # Safety
/// `a` and `b` must point to `na` and `nb` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvr_welch_ttest(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    alpha: f64,
    out: *mut CvrTTest,
) -> CvrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let r = welch_ttest(slice_arg(a, na, "a")?, slice_arg(b, nb, "b")?, alpha)?;
        *out = CvrTTest {
            t: r.t,
            df: r.df,
            p: r.p,
            significant: r.significant,
        };
        Ok(())
    })
}

fn finish_engine(
    liked: CvSequence,
    disliked: CvSequence,
    seed: u64,
    out: *mut *mut CvrEngine,
) -> Result<(), Failure> {
    let config = CycleConfig {
        seed,
        ..CycleConfig::default()
    };
    RankEngine::new(&liked, &disliked, config)?.ensure_capacity()?;
    let engine = Box::new(CvrEngine {
        liked,
        disliked,
        config,
    });
    // SAFETY: callers checked `out` for null.
    unsafe { *out = Box::into_raw(engine) };
    Ok(())
}

fn metric() -> &'static dyn ChangeMetric {
    &PaddedBytes
}

/// Build an engine from a store directory written by `cvrank ingest`.
///
/// # Safety
/// `dir` must be a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvr_engine_from_store(
    dir: *const c_char,
    seed: u64,
    out: *mut *mut CvrEngine,
) -> CvrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let store = Store::new(Path::new(str_arg(dir, "dir")?));
        let (liked, disliked, _) =
            resolve_flips(&store.load(Label::Liked)?, &store.load(Label::Disliked)?);
        finish_engine(
            CvSequence::build(&liked, metric())?,
            CvSequence::build(&disliked, metric())?,
            seed,
            out,
        )
    })
}

fn fen_lines(text: &str) -> Result<Vec<FenRecord>, Failure> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| parse_fen(l).map_err(Failure::from))
        .collect()
}

/// Build an engine from two newline-separated FEN lists, oldest first.
///
/// # Safety
/// Both lists must be valid NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvr_engine_from_fens(
    liked: *const c_char,
    disliked: *const c_char,
    seed: u64,
    out: *mut *mut CvrEngine,
) -> CvrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let l = fen_lines(str_arg(liked, "liked")?)?;
        let d = fen_lines(str_arg(disliked, "disliked")?)?;
        finish_engine(
            CvSequence::from_fens(Label::Liked, l, metric())?,
            CvSequence::from_fens(Label::Disliked, d, metric())?,
            seed,
            out,
        )
    })
}

/// Number of cycles each score has.
///
/// # Safety
/// `engine` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cvr_engine_cycles(engine: *const CvrEngine) -> usize {
    engine.as_ref().map_or(0, |e| e.config.cycles)
}

/// Score `fen` as candidate number `ordinal` of a collection; the result
/// equals the CLI's score for the same position, seed and ordinal. Up to
/// `rp_cap` per-cycle rank percentages go to `rp_out` (may be null when
/// `rp_cap` is 0). The average goes to `arp_out`.
///
/// # Safety
/// `engine` must be a live handle, `fen` a valid string, `rp_out` valid for
/// `rp_cap` writes, `arp_out` writable.
#[no_mangle]
pub unsafe extern "C" fn cvr_engine_score(
    engine: *const CvrEngine,
    fen: *const c_char,
    ordinal: u64,
    rp_out: *mut f64,
    rp_cap: usize,
    arp_out: *mut f64,
) -> CvrStatus {
    guard(|| {
        let engine = engine.as_ref().ok_or_else(|| null("engine"))?;
        if arp_out.is_null() {
            return Err(null("arp_out"));
        }
        if rp_out.is_null() && rp_cap > 0 {
            return Err(null("rp_out"));
        }
        let fen = fen_arg(fen, "fen")?;
        let ranker = RankEngine::new(&engine.liked, &engine.disliked, engine.config)?;
        let score = ranker
            .score_all_from(std::slice::from_ref(&fen), ordinal, Some(1), None)?
            .pop()
            .expect("one candidate in, one score out");
        for (i, c) in score.cycles.iter().take(rp_cap).enumerate() {
            *rp_out.add(i) = c.rp;
        }
        *arp_out = score.arp;
        Ok(())
    })
}

/// Release an engine. Null is ignored.
///
/// # Safety
/// `engine` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cvr_engine_free(engine: *mut CvrEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

//! C ABI over the wcnkit lattice, confusion network and metric routines.
//!
//! Every fallible call returns a [`WcnStatus`] and writes its result through
//! an out-pointer. On failure, [`wcn_last_error_message`] describes the most
//! recent error on the calling thread. Strings handed out by this library
//! must be released with [`wcn_string_free`], lattices with
//! [`wcn_lattice_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use wcnkit::confnet::{build_wcn, filter_options, flatten_wcn, OptionOrder, Separator, WcnRenderOptions};
use wcnkit::lattice::{arc_posteriors, best_path, parse_lattice, Lattice, Scales};
use wcnkit::metrics::{exact_match, unigram_f1, wer, AnswerNormalization};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WcnStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidArgument = 4,
    ComputeError = 5,
    Panic = 6,
}

/// Option order inside a flattened bin.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WcnOrder {
    /// Order in which the options first appear in the lattice.
    Lattice = 0,
    /// Highest posterior first.
    Posterior = 1,
}

/// Opaque parsed lattice.
pub struct WcnLattice {
    inner: Lattice,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl ToString) {
    let text = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Fail(WcnStatus, String);

impl Fail {
    fn new(status: WcnStatus, msg: impl ToString) -> Self {
        Fail(status, msg.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> WcnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            WcnStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            WcnStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::new(WcnStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::new(WcnStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn lattice<'a>(p: *const WcnLattice) -> Result<&'a Lattice, Fail> {
    p.as_ref()
        .map(|l| &l.inner)
        .ok_or_else(|| Fail::new(WcnStatus::NullArgument, "lattice is null"))
}

fn check_out<T>(p: *mut T) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail::new(WcnStatus::NullArgument, "output pointer is null"))
    } else {
        Ok(())
    }
}

fn to_c(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail::new(WcnStatus::ComputeError, "result contains a NUL byte"))
}

fn scales(acoustic: f64, lm: f64) -> Result<Scales, Fail> {
    Scales::new(acoustic, lm).map_err(|e| Fail::new(WcnStatus::InvalidArgument, e))
}

fn normalization(raw: bool) -> AnswerNormalization {
    if raw {
        AnswerNormalization::Raw
    } else {
        AnswerNormalization::Squad
    }
}

/// Parses an SLF lattice. On success `*out` owns a new handle.
///
/// # Safety
/// `slf` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn wcn_lattice_parse(slf: *const c_char, out: *mut *mut WcnLattice) -> WcnStatus {
    guard(|| {
        check_out(out)?;
        *out = ptr::null_mut();
        let lat = parse_lattice(text(slf, "slf")?).map_err(|e| Fail::new(WcnStatus::ParseError, e))?;
        *out = Box::into_raw(Box::new(WcnLattice { inner: lat }));
        Ok(())
    })
}

/// Releases a lattice. Null is ignored.
///
/// # Safety
/// `lat` must come from [`wcn_lattice_parse`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wcn_lattice_free(lat: *mut WcnLattice) {
    if !lat.is_null() {
        drop(Box::from_raw(lat));
    }
}

/// # Safety
/// `lat` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wcn_lattice_num_arcs(lat: *const WcnLattice, out: *mut usize) -> WcnStatus {
    guard(|| {
        check_out(out)?;
        *out = lattice(lat)?.num_arcs();
        Ok(())
    })
}

/// Flattens the lattice's confusion network into one line of text.
/// `separator` is `'|'` or `'/'`; options below `threshold` are dropped.
///
/// # Safety
/// `lat` must be a live handle and `out` writable. Free `*out` with
/// [`wcn_string_free`].
#[no_mangle]
pub unsafe extern "C" fn wcn_lattice_render_wcn(
    lat: *const WcnLattice,
    separator: c_char,
    threshold: f64,
    order: WcnOrder,
    acoustic_scale: f64,
    lm_scale: f64,
    out: *mut *mut c_char,
) -> WcnStatus {
    guard(|| {
        check_out(out)?;
        *out = ptr::null_mut();
        let lat = lattice(lat)?;
        let sep: Separator = char::from(separator as u8)
            .to_string()
            .parse()
            .map_err(|e| Fail::new(WcnStatus::InvalidArgument, e))?;
        let mut opts = WcnRenderOptions::new(sep, threshold).map_err(|e| Fail::new(WcnStatus::InvalidArgument, e))?;
        opts.order = match order {
            WcnOrder::Lattice => OptionOrder::Lattice,
            WcnOrder::Posterior => OptionOrder::Posterior,
        };
        let compute = |e: &dyn std::fmt::Display| Fail::new(WcnStatus::ComputeError, e);
        let post = arc_posteriors(lat, scales(acoustic_scale, lm_scale)?).map_err(|e| compute(&e))?;
        let cn = build_wcn(lat, &post).map_err(|e| compute(&e))?;
        let cn = filter_options(&cn, threshold).map_err(|e| compute(&e))?;
        *out = to_c(flatten_wcn(&cn, &opts).map_err(|e| compute(&e))?)?;
        Ok(())
    })
}

/// Highest-scoring path. Writes its words, space-separated, to `*words` and
/// its combined log weight to `*score` when `score` is not null.
///
/// # Safety
/// `lat` must be a live handle, `words` writable, `score` writable or null.
#[no_mangle]
pub unsafe extern "C" fn wcn_lattice_best_path(
    lat: *const WcnLattice,
    acoustic_scale: f64,
    lm_scale: f64,
    words: *mut *mut c_char,
    score: *mut f64,
) -> WcnStatus {
    guard(|| {
        check_out(words)?;
        *words = ptr::null_mut();
        let lat = lattice(lat)?;
        let best = best_path(lat, scales(acoustic_scale, lm_scale)?)
            .map_err(|e| Fail::new(WcnStatus::ComputeError, e))?;
        if !score.is_null() {
            *score = best.score;
        }
        *words = to_c(best.text())?;
        Ok(())
    })
}

/// Word error rate in percent between whitespace-tokenized strings.
/// An empty reference is an invalid argument.
///
/// # Safety
/// `hyp` and `reference` must be NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wcn_wer(hyp: *const c_char, reference: *const c_char, out: *mut f64) -> WcnStatus {
    guard(|| {
        check_out(out)?;
        let h: Vec<&str> = text(hyp, "hyp")?.split_whitespace().collect();
        let r: Vec<&str> = text(reference, "reference")?.split_whitespace().collect();
        *out = wer(&h, &r).map_err(|e| Fail::new(WcnStatus::InvalidArgument, e))?;
        Ok(())
    })
}

/// Unigram F1 between a prediction and one gold answer. `raw` nonzero skips
/// answer normalization.
///
/// # Safety
/// `pred` and `gold` must be NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wcn_f1(pred: *const c_char, gold: *const c_char, raw: c_int, out: *mut f64) -> WcnStatus {
    guard(|| {
        check_out(out)?;
        *out = unigram_f1(text(pred, "pred")?, text(gold, "gold")?, normalization(raw != 0));
        Ok(())
    })
}

/// Exact match (0 or 1) after normalization.
///
/// # Safety
/// `pred` and `gold` must be NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wcn_exact_match(pred: *const c_char, gold: *const c_char, raw: c_int, out: *mut c_int) -> WcnStatus {
    guard(|| {
        check_out(out)?;
        *out = c_int::from(exact_match(text(pred, "pred")?, text(gold, "gold")?, normalization(raw != 0)));
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wcn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread, or null after a
/// success. Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn wcn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

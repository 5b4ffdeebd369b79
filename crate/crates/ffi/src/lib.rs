//! C ABI over the card-number decoder, Luhn helpers and the verdict rules.
//!
//! Every fallible function returns a [`CardpipeStatus`]. On failure a
//! message is kept per thread and can be read with [`cardpipe_last_error`].
//! Handles are opaque and must be released with their matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cardpipe::ocrdecode::{self, DigitBox, HeadGeometry, PanCandidate, RawHeadOutput};
use cardpipe::verdict::{self, RulesConfig};

#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CardpipeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    NotFound = 4,
    Parse = 5,
    BufferTooSmall = 6,
    Panic = 99,
}

/// One decoded digit box in input-image pixels.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CardpipeBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
    pub digit: u8,
}

/// Decoder for the default head geometry.
pub struct CardpipeDecoder {
    geom: HeadGeometry,
}

/// Boxes after suppression plus the assembled card number, if any.
pub struct CardpipeReadResult {
    boxes: Vec<DigitBox>,
    pan: Option<(PanCandidate, CString)>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: CardpipeStatus, msg: impl Into<String>) -> CardpipeStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> CardpipeStatus) -> CardpipeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(CardpipeStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, CardpipeStatus> {
    if p.is_null() {
        return Err(fail(CardpipeStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(CardpipeStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

/// Message for the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cardpipe_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Writes whether the NUL-terminated digit string passes the Luhn check.
///
/// # Safety
/// `digits` must be a valid C string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cardpipe_luhn_valid(digits: *const c_char, out: *mut bool) -> CardpipeStatus {
    guard(|| {
        let s = match str_arg(digits, "digits") {
            Ok(s) => s,
            Err(e) => return e,
        };
        if out.is_null() {
            return fail(CardpipeStatus::NullPointer, "out is null");
        }
        match ocrdecode::luhn_valid(s) {
            Ok(v) => {
                *out = v;
                CardpipeStatus::Ok
            }
            Err(e) => fail(CardpipeStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Writes the digit that makes `prefix` followed by it Luhn-valid.
///
/// # Safety
/// `prefix` must be a valid C string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cardpipe_luhn_check_digit(prefix: *const c_char, out: *mut u8) -> CardpipeStatus {
    guard(|| {
        let s = match str_arg(prefix, "prefix") {
            Ok(s) => s,
            Err(e) => return e,
        };
        if out.is_null() {
            return fail(CardpipeStatus::NullPointer, "out is null");
        }
        match ocrdecode::luhn_check_digit(s) {
            Ok(d) => {
                *out = d;
                CardpipeStatus::Ok
            }
            Err(e) => fail(CardpipeStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Number of floats in one head output for the default geometry.
#[no_mangle]
pub extern "C" fn cardpipe_head_output_len() -> usize {
    ocrdecode::head_output_len(&HeadGeometry::default())
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cardpipe_decoder_new(out: *mut *mut CardpipeDecoder) -> CardpipeStatus {
    guard(|| {
        if out.is_null() {
            return fail(CardpipeStatus::NullPointer, "out is null");
        }
        *out = Box::into_raw(Box::new(CardpipeDecoder { geom: HeadGeometry::default() }));
        CardpipeStatus::Ok
    })
}

/// # Safety
/// `decoder` must come from `cardpipe_decoder_new` and not be used again.
#[no_mangle]
pub unsafe extern "C" fn cardpipe_decoder_free(decoder: *mut CardpipeDecoder) {
    if !decoder.is_null() {
        drop(Box::from_raw(decoder));
    }
}

/// Decodes a flat head output (per scale: regression then scores, row-major)
/// into boxes and a card-number candidate.
///
/// # Safety
/// `values` must point to `len` floats; `decoder` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cardpipe_decoder_decode(
    decoder: *const CardpipeDecoder,
    values: *const f32,
    len: usize,
    out: *mut *mut CardpipeReadResult,
) -> CardpipeStatus {
    guard(|| {
        if decoder.is_null() || values.is_null() || out.is_null() {
            return fail(CardpipeStatus::NullPointer, "decoder, values and out must be non-null");
        }
        let geom = &(*decoder).geom;
        let values = std::slice::from_raw_parts(values, len);
        let raw = match RawHeadOutput::from_flat(geom, values) {
            Ok(r) => r,
            Err(e) => return fail(CardpipeStatus::InvalidArgument, e.to_string()),
        };
        let decoded = match ocrdecode::decode_boxes(&raw, geom, ocrdecode::DEFAULT_SCORE_THRESHOLD) {
            Ok(b) => b,
            Err(e) => return fail(CardpipeStatus::InvalidArgument, e.to_string()),
        };
        let boxes = ocrdecode::nms(&decoded, ocrdecode::DEFAULT_IOU_THRESHOLD);
        let pan = ocrdecode::assemble_pan(&boxes).map(|p| {
            let c = CString::new(p.digits.clone()).expect("digits");
            (p, c)
        });
        *out = Box::into_raw(Box::new(CardpipeReadResult { boxes, pan }));
        CardpipeStatus::Ok
    })
}

/// # Safety
/// `result` must come from `cardpipe_decoder_decode` and not be used again.
#[no_mangle]
pub unsafe extern "C" fn cardpipe_result_free(result: *mut CardpipeReadResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// # Safety
/// `result` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn cardpipe_result_box_count(result: *const CardpipeReadResult) -> usize {
    result.as_ref().map_or(0, |r| r.boxes.len())
}

/// # Safety
/// `result` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cardpipe_result_box(result: *const CardpipeReadResult, index: usize, out: *mut CardpipeBox) -> CardpipeStatus {
    guard(|| {
        let (Some(r), false) = (result.as_ref(), out.is_null()) else {
            return fail(CardpipeStatus::NullPointer, "result and out must be non-null");
        };
        let Some(b) = r.boxes.get(index) else {
            return fail(CardpipeStatus::NotFound, format!("box {index} of {}", r.boxes.len()));
        };
        *out = CardpipeBox { cx: b.cx, cy: b.cy, w: b.w, h: b.h, score: b.score, digit: b.digit };
        CardpipeStatus::Ok
    })
}

/// Copies the assembled card number into `buf` with a trailing NUL.
/// `needed` receives the buffer size required, including the NUL. Returns
/// `NotFound` when no number was assembled.
///
/// # Safety
/// `result` must be live, `buf` must hold `cap` bytes (or be null with
/// `cap == 0`), `needed` and `luhn_valid` may be null.
#[no_mangle]
pub unsafe extern "C" fn cardpipe_result_pan(
    result: *const CardpipeReadResult,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
    luhn_valid: *mut bool,
) -> CardpipeStatus {
    guard(|| {
        let Some(r) = result.as_ref() else {
            return fail(CardpipeStatus::NullPointer, "result is null");
        };
        let Some((pan, c)) = &r.pan else {
            return fail(CardpipeStatus::NotFound, "no card number candidate");
        };
        let bytes = c.as_bytes_with_nul();
        if !needed.is_null() {
            *needed = bytes.len();
        }
        if !luhn_valid.is_null() {
            *luhn_valid = pan.luhn_valid;
        }
        if buf.is_null() || cap < bytes.len() {
            return fail(CardpipeStatus::BufferTooSmall, format!("need {} bytes", bytes.len()));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, bytes.len());
        CardpipeStatus::Ok
    })
}

/// Applies the fraud rules to a scan-report JSON and an expected-card JSON.
/// On success `verdict_json` receives a string to release with
/// `cardpipe_string_free` and `exit_code` the decision code (0 pass,
/// 2 reject, 3 inconclusive).
///
/// # Safety
/// Inputs must be valid C strings; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn cardpipe_verdict_decide(
    report_json: *const c_char,
    expected_json: *const c_char,
    verdict_json: *mut *mut c_char,
    exit_code: *mut i32,
) -> CardpipeStatus {
    guard(|| {
        let report = match str_arg(report_json, "report_json") {
            Ok(s) => s,
            Err(e) => return e,
        };
        let expected = match str_arg(expected_json, "expected_json") {
            Ok(s) => s,
            Err(e) => return e,
        };
        if verdict_json.is_null() || exit_code.is_null() {
            return fail(CardpipeStatus::NullPointer, "outputs must be non-null");
        }
        let payload = match verdict::parse_payload(report.as_bytes()) {
            Ok(p) => p,
            Err(e) => return fail(CardpipeStatus::Parse, e.to_string()),
        };
        let expected = match verdict::parse_expected(expected.as_bytes()) {
            Ok(e) => e,
            Err(e) => return fail(CardpipeStatus::Parse, e.to_string()),
        };
        let v = verdict::decide(&payload, &expected, &RulesConfig::new());
        let json = serde_json::to_string(&v).expect("verdict serializes");
        *exit_code = v.decision.exit_code();
        *verdict_json = CString::new(json).expect("json has no nul").into_raw();
        CardpipeStatus::Ok
    })
}

/// # Safety
/// `s` must come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn cardpipe_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

//! C ABI over the `traincert` library.
//!
//! Every fallible function returns a [`TcStatus`]. On failure a message is
//! stored per thread and can be read with [`tc_last_error`]. Objects are
//! handed out as opaque pointers and released with their `_free` function.
//! Strings returned as `char *` are owned by the caller and released with
//! [`tc_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, UnwindSafe};
use std::ptr;
use std::slice;

use traincert::attest::{estimate_storage, Container, DisclosureBundle};
use traincert::auditsim::{escape_probability_approx, escape_probability_exact};
use traincert::cli::model_state_bytes;
use traincert::dataset::Dataset;
use traincert::detnet::OptimizerKind;
use traincert::merkle::{verify_path, AuditPath, Digest};
use traincert::verify::{sample_transitions, verify_complete, verify_transitions, AuditPlan, VerificationReport};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Decode = 3,
    BufferTooSmall = 4,
    Panic = 5,
}

/// Parsed attestation container.
pub struct TcContainer(Container);

/// Dataset file contents.
pub struct TcDataset(Dataset);

/// Outcome of a verification run.
pub struct TcReport(VerificationReport);

/// Storage figures in bytes.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TcStorageEstimate {
    pub stored_values: u64,
    pub per_checkpoint_bytes: u64,
    pub tree_bytes: u64,
    pub penultimate_level_bytes: u64,
    pub total_bytes: u64,
    pub total_bound_bytes: u64,
}

pub const TC_OPTIMIZER_SGD: u8 = 0;
pub const TC_OPTIMIZER_MOMENTUM: u8 = 1;
pub const TC_OPTIMIZER_ADAM: u8 = 2;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

struct Fail(TcStatus, String);

impl Fail {
    fn null(what: &str) -> Self {
        Fail(TcStatus::NullPointer, format!("{what} is null"))
    }

    fn invalid(msg: impl ToString) -> Self {
        Fail(TcStatus::InvalidArgument, msg.to_string())
    }

    fn decode(msg: impl ToString) -> Self {
        Fail(TcStatus::Decode, msg.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail> + UnwindSafe) -> TcStatus {
    match catch_unwind(f) {
        Ok(Ok(())) => {
            set_error("");
            TcStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TcStatus::Panic
        }
    }
}

unsafe fn bytes<'a>(ptr: *const u8, len: usize, what: &str) -> Result<&'a [u8], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Fail::null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn out<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    ptr.as_mut().ok_or_else(|| Fail::null(what))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Fail> {
    ptr.as_ref().ok_or_else(|| Fail::null(what))
}

unsafe fn text<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if ptr.is_null() {
        return Err(Fail::null(what));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| Fail::invalid(format!("{what} is not UTF-8")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

/// Message of the last failed call on this thread, empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Accepts null.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn tc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Probability that an audit of `v` of `m` transitions misses all `a`
/// manipulated ones.
///
/// # Safety
/// `out_p` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tc_escape_probability_exact(m: u64, v: u64, a: u64, out_p: *mut f64) -> TcStatus {
    guard(|| {
        let out_p = out(out_p, "out_p")?;
        *out_p = escape_probability_exact(m, v, a).map_err(Fail::invalid)?;
        Ok(())
    })
}

/// `exp(-a*v/m)`.
#[no_mangle]
pub extern "C" fn tc_escape_probability_approx(m: u64, v: u64, a: u64) -> f64 {
    escape_probability_approx(m, v, a)
}

/// Storage needed for `m` checkpoints of `n` parameters.
///
/// # Safety
/// `out_estimate` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tc_estimate_storage(
    n: u64,
    m: u64,
    arity: u64,
    optimizer: u8,
    bytes_per_param: u64,
    digest_len: u64,
    out_estimate: *mut TcStorageEstimate,
) -> TcStatus {
    guard(|| {
        let dst = out(out_estimate, "out_estimate")?;
        let kind = match optimizer {
            TC_OPTIMIZER_SGD => OptimizerKind::Sgd,
            TC_OPTIMIZER_MOMENTUM => OptimizerKind::Momentum,
            TC_OPTIMIZER_ADAM => OptimizerKind::Adam,
            other => return Err(Fail::invalid(format!("unknown optimizer {other}"))),
        };
        let e = estimate_storage(n, m, arity, kind, bytes_per_param, digest_len).map_err(Fail::invalid)?;
        *dst = TcStorageEstimate {
            stored_values: e.stored_values,
            per_checkpoint_bytes: e.per_checkpoint_bytes,
            tree_bytes: e.tree_bytes,
            penultimate_level_bytes: e.penultimate_level_bytes,
            total_bytes: e.total_bytes,
            total_bound_bytes: e.total_bound_bytes,
        };
        Ok(())
    })
}

/// Parses an attestation container.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out_container` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tc_container_open(
    data: *const u8,
    len: usize,
    out_container: *mut *mut TcContainer,
) -> TcStatus {
    guard(|| {
        let dst = out(out_container, "out_container")?;
        let c = Container::from_bytes(bytes(data, len, "data")?).map_err(Fail::decode)?;
        *dst = Box::into_raw(Box::new(TcContainer(c)));
        Ok(())
    })
}

/// # Safety
/// `c` must come from [`tc_container_open`] and not have been freed. Accepts null.
#[no_mangle]
pub unsafe extern "C" fn tc_container_free(c: *mut TcContainer) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Copies the signed 32-byte root.
///
/// # Safety
/// `c` must be a live container; `out_root` must have room for 32 bytes.
#[no_mangle]
pub unsafe extern "C" fn tc_container_root(c: *const TcContainer, out_root: *mut u8) -> TcStatus {
    guard(|| {
        let c = handle(c, "container")?;
        if out_root.is_null() {
            return Err(Fail::null("out_root"));
        }
        ptr::copy_nonoverlapping(c.0.signed.root.as_bytes().as_ptr(), out_root, 32);
        Ok(())
    })
}

/// Attestation mode: 0 complete, 1 partial.
///
/// # Safety
/// `c` must be a live container; `out_mode` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tc_container_mode(c: *const TcContainer, out_mode: *mut u8) -> TcStatus {
    guard(|| {
        let c = handle(c, "container")?;
        *out(out_mode, "out_mode")? = c.0.mode.code();
        Ok(())
    })
}

/// Parses a dataset file.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out_dataset` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tc_dataset_open(data: *const u8, len: usize, out_dataset: *mut *mut TcDataset) -> TcStatus {
    guard(|| {
        let dst = out(out_dataset, "out_dataset")?;
        let d = Dataset::from_bytes(bytes(data, len, "data")?).map_err(Fail::decode)?;
        *dst = Box::into_raw(Box::new(TcDataset(d)));
        Ok(())
    })
}

/// # Safety
/// `d` must come from [`tc_dataset_open`] and not have been freed. Accepts null.
#[no_mangle]
pub unsafe extern "C" fn tc_dataset_free(d: *mut TcDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

unsafe fn key32<'a>(pk: *const u8) -> Result<&'a [u8], Fail> {
    bytes(pk, 32, "public_key")
}

/// Replays a complete attestation against the dataset and a model file
/// holding the claimed final weights. A failed verification still returns
/// `Ok` with a report describing the failure.
///
/// # Safety
/// Handles must be live; `model` must point to `model_len` bytes; `public_key`
/// to 32 bytes; `out_report` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tc_verify_complete(
    c: *const TcContainer,
    d: *const TcDataset,
    model: *const u8,
    model_len: usize,
    public_key: *const u8,
    out_report: *mut *mut TcReport,
) -> TcStatus {
    guard(|| {
        let dst = out(out_report, "out_report")?;
        let (c, d) = (handle(c, "container")?, handle(d, "dataset")?);
        let state = model_state_bytes(bytes(model, model_len, "model")?).map_err(Fail::decode)?;
        let report = verify_complete(&c.0, state, &d.0, key32(public_key)?);
        *dst = Box::into_raw(Box::new(TcReport(report)));
        Ok(())
    })
}

/// Checks the transitions named by an audit plan (text form) using the
/// container's signed root and a disclosure bundle.
///
/// # Safety
/// `c` must be live; `plan` NUL-terminated; `bundle` must point to
/// `bundle_len` bytes; `public_key` to 32 bytes; `out_report` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tc_verify_partial(
    c: *const TcContainer,
    plan: *const c_char,
    bundle: *const u8,
    bundle_len: usize,
    public_key: *const u8,
    out_report: *mut *mut TcReport,
) -> TcStatus {
    guard(|| {
        let dst = out(out_report, "out_report")?;
        let c = handle(c, "container")?;
        let plan = AuditPlan::from_text(text(plan, "plan")?).map_err(Fail::decode)?;
        let bundle = DisclosureBundle::from_bytes(bytes(bundle, bundle_len, "bundle")?).map_err(Fail::decode)?;
        let report = verify_transitions(&c.0.signed, &plan, &bundle, key32(public_key)?);
        *dst = Box::into_raw(Box::new(TcReport(report)));
        Ok(())
    })
}

/// # Safety
/// `r` must come from a verify call and not have been freed. Accepts null.
#[no_mangle]
pub unsafe extern "C" fn tc_report_free(r: *mut TcReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Process exit code for the report: 0 on success, 10 to 15 for the
/// failure classes. Returns -1 for a null report.
///
/// # Safety
/// `r` must be null or a live report.
#[no_mangle]
pub unsafe extern "C" fn tc_report_exit_code(r: *const TcReport) -> i32 {
    r.as_ref().map_or(-1, |r| r.0.exit_code())
}

/// Human and machine readable report text. Free with [`tc_string_free`].
/// Returns null for a null report.
///
/// # Safety
/// `r` must be null or a live report.
#[no_mangle]
pub unsafe extern "C" fn tc_report_render(r: *const TcReport) -> *mut c_char {
    r.as_ref().map_or(ptr::null_mut(), |r| into_c_string(r.0.render()))
}

/// Index of the first failing transition or item, if the failure names one.
///
/// # Safety
/// `r` must be a live report; `out_index` and `out_has_index` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tc_report_failure_index(
    r: *const TcReport,
    out_index: *mut u64,
    out_has_index: *mut bool,
) -> TcStatus {
    guard(|| {
        let r = handle(r, "report")?;
        let (idx, has) = (out(out_index, "out_index")?, out(out_has_index, "out_has_index")?);
        let index = r.0.failure().and_then(|(_, f)| f.index);
        *has = index.is_some();
        *idx = index.unwrap_or(0);
        Ok(())
    })
}

/// Draws `v` distinct transitions out of `m` for `seed`, ascending.
/// Writes at most `capacity` values; `out_len` receives `v`.
///
/// # Safety
/// `out_indices` must have room for `capacity` values; `out_len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tc_sample_transitions(
    m: u64,
    v: u64,
    seed: u64,
    out_indices: *mut u64,
    capacity: usize,
    out_len: *mut usize,
) -> TcStatus {
    guard(|| {
        let len = out(out_len, "out_len")?;
        let plan = sample_transitions(m, v, seed).map_err(Fail::invalid)?;
        *len = plan.sampled.len();
        if plan.sampled.len() > capacity {
            return Err(Fail(TcStatus::BufferTooSmall, format!("need room for {} indices", plan.sampled.len())));
        }
        if !plan.sampled.is_empty() {
            if out_indices.is_null() {
                return Err(Fail::null("out_indices"));
            }
            ptr::copy_nonoverlapping(plan.sampled.as_ptr(), out_indices, plan.sampled.len());
        }
        Ok(())
    })
}

/// Checks that `leaf` opens to the 32-byte `root` via an encoded audit path.
///
/// # Safety
/// Pointers must cover their stated lengths; `root` must hold 32 bytes;
/// `out_valid` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tc_merkle_verify_path(
    leaf: *const u8,
    leaf_len: usize,
    path: *const u8,
    path_len: usize,
    root: *const u8,
    out_valid: *mut bool,
) -> TcStatus {
    guard(|| {
        let valid = out(out_valid, "out_valid")?;
        let leaf = bytes(leaf, leaf_len, "leaf")?;
        let path = AuditPath::from_bytes(bytes(path, path_len, "path")?).map_err(Fail::decode)?;
        let root: [u8; 32] = bytes(root, 32, "root")?.try_into().expect("32 bytes");
        *valid = verify_path(leaf, &path, &Digest(root));
        Ok(())
    })
}

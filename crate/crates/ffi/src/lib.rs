//! C ABI over the memtrack engine.
//!
//! Every fallible call returns an [`MtStatus`]. On failure a message is kept
//! per thread and can be read with [`mt_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};

use memtrack::memory::{read_snapshot, write_snapshot};
use memtrack::metrics::{mota, EvalCounts, FrameCounts};
use memtrack::{compute_eta, Engine, EngineConfig, Error, Observation};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Schema = 4,
    Descriptor = 5,
    Sequencing = 6,
    Io = 7,
    UndefinedMetric = 8,
    Internal = 9,
    Panic = 10,
}

/// Engine settings. Start from [`mt_config_default`] and override fields.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MtConfig {
    pub rho_bar: f64,
    pub alpha: f64,
    pub e_bar: f64,
    pub capacity: usize,
    pub tau_abs: f64,
    pub confirm_consecutive: u32,
    pub confirm_window: u64,
    /// Descriptor dimension. May be 0 when loading a snapshot.
    pub dim: usize,
    pub seed: u64,
    pub normalize: bool,
}

impl From<&EngineConfig> for MtConfig {
    fn from(c: &EngineConfig) -> Self {
        Self {
            rho_bar: c.rho_bar,
            alpha: c.alpha,
            e_bar: c.e_bar,
            capacity: c.capacity,
            tau_abs: c.tau_abs,
            confirm_consecutive: c.confirm_consecutive,
            confirm_window: c.confirm_window,
            dim: c.dim,
            seed: c.seed,
            normalize: c.normalize,
        }
    }
}

impl From<&MtConfig> for EngineConfig {
    fn from(c: &MtConfig) -> Self {
        Self {
            rho_bar: c.rho_bar,
            alpha: c.alpha,
            e_bar: c.e_bar,
            capacity: c.capacity,
            tau_abs: c.tau_abs,
            confirm_consecutive: c.confirm_consecutive,
            confirm_window: c.confirm_window,
            dim: c.dim,
            seed: c.seed,
            normalize: c.normalize,
        }
    }
}

/// Opaque engine handle.
pub struct MtEngine {
    engine: Engine,
}

struct Failure {
    status: MtStatus,
    message: String,
}

impl Failure {
    fn new(status: MtStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Dimension { .. } | Error::Parse { .. } | Error::Schema(_) => MtStatus::Schema,
            Error::Config(_) => MtStatus::Config,
            Error::ZeroVector | Error::NonFinite => MtStatus::Descriptor,
            Error::Sequencing { .. } => MtStatus::Sequencing,
            Error::Io(_) => MtStatus::Io,
            Error::UndefinedMetric(_) => MtStatus::UndefinedMetric,
            _ => MtStatus::Internal,
        };
        Self::new(status, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::from(Error::Io(e))
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MtStatus::Ok
        }
        Ok(Err(failure)) => {
            set_last_error(&failure.message);
            failure.status
        }
        Err(_) => {
            set_last_error("panic inside memtrack");
            MtStatus::Panic
        }
    }
}

fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    // SAFETY: the caller promises `p` is null or valid for reads.
    unsafe { p.as_ref() }.ok_or_else(|| Failure::new(MtStatus::NullPointer, format!("{what} is null")))
}

fn non_null_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: the caller promises `p` is null or valid and unaliased.
    unsafe { p.as_mut() }.ok_or_else(|| Failure::new(MtStatus::NullPointer, format!("{what} is null")))
}

fn path_arg(p: *const c_char) -> Result<String, Failure> {
    if p.is_null() {
        return Err(Failure::new(MtStatus::NullPointer, "path is null"));
    }
    // SAFETY: non-null and nul-terminated per the API contract.
    let s = unsafe { CStr::from_ptr(p) };
    s.to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::new(MtStatus::InvalidArgument, "path is not valid UTF-8"))
}

/// Default engine settings, with `dim` left at 0.
#[no_mangle]
pub extern "C" fn mt_config_default() -> MtConfig {
    MtConfig::from(&EngineConfig::default())
}

/// Message for the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn mt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Creates an engine with an empty memory. `config->dim` must be positive.
///
/// # Safety
/// `config` must be null or point to a valid `MtConfig`; `out` must be null
/// or writable.
#[no_mangle]
pub unsafe extern "C" fn mt_engine_new(config: *const MtConfig, out: *mut *mut MtEngine) -> MtStatus {
    guard(|| {
        let config = non_null(config, "config")?;
        let out = non_null_mut(out, "out")?;
        let engine = Engine::new(EngineConfig::from(config))?;
        *out = Box::into_raw(Box::new(MtEngine { engine }));
        Ok(())
    })
}

/// Creates an engine from a memory snapshot file. A zero `config->dim` is
/// taken from the snapshot.
///
/// # Safety
/// As for [`mt_engine_new`]; `path` must be a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mt_engine_load_snapshot(
    config: *const MtConfig,
    path: *const c_char,
    out: *mut *mut MtEngine,
) -> MtStatus {
    guard(|| {
        let config = non_null(config, "config")?;
        let path = path_arg(path)?;
        let out = non_null_mut(out, "out")?;
        let mut cfg = EngineConfig::from(config);
        let store = read_snapshot(BufReader::new(File::open(path)?), cfg.e_bar, cfg.normalize)?;
        if cfg.dim == 0 {
            cfg.dim = store.dimension();
        }
        let engine = Engine::from_store(cfg, store)?;
        *out = Box::into_raw(Box::new(MtEngine { engine }));
        Ok(())
    })
}

/// Releases an engine. Null is ignored.
///
/// # Safety
/// `engine` must be null or a handle returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mt_engine_free(engine: *mut MtEngine) {
    if !engine.is_null() {
        // SAFETY: the handle came from Box::into_raw.
        drop(unsafe { Box::from_raw(engine) });
    }
}

/// Processes one frame of `count` descriptors stored row-major in
/// `descriptors` (`count * dim` values). Writes one identity per observation
/// to `out_ids`, or -1 when the observation was left unassigned.
///
/// # Safety
/// `descriptors` must hold `count * dim` doubles and `out_ids` at least
/// `out_len` slots. Either may be null when `count` is 0.
#[no_mangle]
pub unsafe extern "C" fn mt_engine_process_frame(
    engine: *mut MtEngine,
    frame: u64,
    descriptors: *const f64,
    count: usize,
    out_ids: *mut i64,
    out_len: usize,
) -> MtStatus {
    guard(|| {
        let handle = non_null_mut(engine, "engine")?;
        if out_len < count {
            return Err(Failure::new(
                MtStatus::InvalidArgument,
                format!("out_len {out_len} is smaller than count {count}"),
            ));
        }
        let dim = handle.engine.config().dim;
        let values: &[f64] = if count == 0 {
            &[]
        } else {
            non_null(descriptors, "descriptors")?;
            non_null(out_ids as *const i64, "out_ids")?;
            let n = count
                .checked_mul(dim)
                .ok_or_else(|| Failure::new(MtStatus::InvalidArgument, "count * dim overflows"))?;
            // SAFETY: non-null and holds count * dim values per the contract.
            unsafe { std::slice::from_raw_parts(descriptors, n) }
        };
        let observations: Vec<Observation> = values
            .chunks_exact(dim)
            .enumerate()
            .map(|(k, d)| Observation {
                det: format!("{frame}:{k}"),
                descriptor: d.to_vec(),
                bbox: None,
                gt: None,
            })
            .collect();
        let result = handle.engine.process_frame(frame, &observations)?;
        if count > 0 {
            // SAFETY: out_ids holds at least out_len >= count slots.
            let ids = unsafe { std::slice::from_raw_parts_mut(out_ids, count) };
            ids.fill(-1);
            for a in &result.assignments {
                if let Some(id) = a.id {
                    ids[a.obs] = i64::try_from(id.0)
                        .map_err(|_| Failure::new(MtStatus::Internal, "identity exceeds i64"))?;
                }
            }
        }
        Ok(())
    })
}

/// Number of stored exemplars.
///
/// # Safety
/// `engine` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mt_engine_memory_len(engine: *const MtEngine, out: *mut usize) -> MtStatus {
    guard(|| {
        let handle = non_null(engine, "engine")?;
        *non_null_mut(out, "out")? = handle.engine.store().len();
        Ok(())
    })
}

/// Descriptor dimension the engine expects.
///
/// # Safety
/// `engine` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mt_engine_dimension(engine: *const MtEngine, out: *mut usize) -> MtStatus {
    guard(|| {
        let handle = non_null(engine, "engine")?;
        *non_null_mut(out, "out")? = handle.engine.config().dim;
        Ok(())
    })
}

/// Writes the memory to a snapshot file.
///
/// # Safety
/// `engine` must be a live handle; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mt_engine_save_snapshot(engine: *const MtEngine, path: *const c_char) -> MtStatus {
    guard(|| {
        let handle = non_null(engine, "engine")?;
        let path = path_arg(path)?;
        let mut out = BufWriter::new(File::create(path)?);
        write_snapshot(handle.engine.store(), &mut out)?;
        out.flush()?;
        Ok(())
    })
}

/// Decay factor for a match with nearest distance `d1` and second-nearest
/// distance `d2`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mt_compute_eta(d1: f64, d2: f64, rho_bar: f64, alpha: f64, out: *mut f64) -> MtStatus {
    guard(|| {
        let out = non_null_mut(out, "out")?;
        if !(d1 >= 0.0 && d2 >= 0.0 && rho_bar > 0.0 && alpha > 0.0) || ![d1, d2, rho_bar, alpha].iter().all(|x| x.is_finite()) {
            return Err(Failure::new(MtStatus::InvalidArgument, "distances must be non-negative and parameters positive"));
        }
        *out = compute_eta(d1, d2, rho_bar, alpha);
        Ok(())
    })
}

/// Tracking accuracy from accumulated counts.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mt_mota(
    gt: u64,
    false_negatives: u64,
    false_positives: u64,
    id_switches: u64,
    out: *mut f64,
) -> MtStatus {
    guard(|| {
        let out = non_null_mut(out, "out")?;
        let counts: EvalCounts = [FrameCounts {
            gt,
            false_negatives,
            false_positives,
            id_switches,
            matches: gt.saturating_sub(false_negatives),
        }]
        .into_iter()
        .collect();
        *out = mota(&counts)?;
        Ok(())
    })
}

//! C ABI for the vector search engine.
//!
//! Engines are opaque `VlEngine` handles. Requests and responses cross the
//! boundary as NUL-terminated UTF-8 JSON using the same wire types as the
//! HTTP service. Every function returns a `VlStatus`; on failure the message
//! is available from [`vl_last_error`] on the same thread. Strings returned
//! through `out` parameters are owned by the caller and released with
//! [`vl_string_free`].
//!
//! Vector kernels work on caller-owned `double` buffers of length `dim`;
//! multi-vector inputs are row-major `n * dim` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use serde::Serialize;
use vl_core::api::{self, ApiError};
use vl_core::config::Settings;
use vl_core::embedder::{Embedder, EmbedderConfig};
use vl_core::engine::{Engine, EngineConfig};
use vl_core::index::Document;
use vl_core::vecmath::{self, UnitVector, WeightedVector};
use vl_core::ErrorCode;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VlStatus {
    Ok = 0,
    BadRequest = 1,
    NotFound = 2,
    DimensionMismatch = 3,
    DegenerateQuery = 4,
    ProviderUnavailable = 5,
    Internal = 6,
    /// A required pointer argument was NULL.
    NullArgument = 7,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 8,
    Panic = 9,
}

impl From<ErrorCode> for VlStatus {
    fn from(code: ErrorCode) -> Self {
        match code {
            ErrorCode::BadRequest => VlStatus::BadRequest,
            ErrorCode::NotFound => VlStatus::NotFound,
            ErrorCode::DimensionMismatch => VlStatus::DimensionMismatch,
            ErrorCode::DegenerateQuery => VlStatus::DegenerateQuery,
            ErrorCode::ProviderUnavailable => VlStatus::ProviderUnavailable,
            ErrorCode::Internal => VlStatus::Internal,
        }
    }
}

/// Opaque engine handle.
pub struct VlEngine {
    engine: Engine,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(VlStatus, String);

impl From<ApiError> for Failure {
    fn from(e: ApiError) -> Self {
        Failure(e.code.into(), e.to_string())
    }
}

impl From<vl_core::Error> for Failure {
    fn from(e: vl_core::Error) -> Self {
        ApiError::from(e).into()
    }
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VlStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            VlStatus::Panic
        }
    }
}

unsafe fn engine_ref<'a>(engine: *const VlEngine) -> Result<&'a Engine, Failure> {
    engine
        .as_ref()
        .map(|e| &e.engine)
        .ok_or_else(|| Failure(VlStatus::NullArgument, "engine handle is NULL".into()))
}

unsafe fn str_arg<'a>(s: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(Failure(VlStatus::NullArgument, format!("{name} is NULL")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure(VlStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(Failure(VlStatus::NullArgument, format!("{name} is NULL")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_json<T: Serialize>(out: *mut *mut c_char, value: &T) -> Result<(), Failure> {
    write_bytes(out, api::to_json(value))
}

unsafe fn write_bytes(out: *mut *mut c_char, bytes: Vec<u8>) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(VlStatus::NullArgument, "out is NULL".into()));
    }
    let c = CString::new(bytes).map_err(|_| Failure(VlStatus::Internal, "response contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn write_vector(out: *mut f64, v: &UnitVector) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(VlStatus::NullArgument, "out is NULL".into()));
    }
    ptr::copy_nonoverlapping(v.as_slice().as_ptr(), out, v.dim());
    Ok(())
}

unsafe fn rows(vectors: *const f64, weights: *const f64, n: usize, dim: usize) -> Result<Vec<WeightedVector>, Failure> {
    let flat = slice_arg(vectors, n * dim, "vectors")?;
    let weights = slice_arg(weights, n, "weights")?;
    if dim == 0 {
        return Err(Failure(VlStatus::BadRequest, "dim must be positive".into()));
    }
    flat.chunks_exact(dim)
        .zip(weights)
        .map(|(row, &w)| Ok(WeightedVector::new(UnitVector::from_components(row.to_vec())?, w)))
        .collect()
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vl_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn vl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates an engine with the deterministic mock embedder.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn vl_engine_new(dimension: usize, seed: u64, out: *mut *mut VlEngine) -> VlStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure(VlStatus::NullArgument, "out is NULL".into()));
        }
        let embedder = Embedder::new(EmbedderConfig::mock(dimension, seed))?;
        let engine = Engine::new(embedder, EngineConfig::default())?;
        *out = Box::into_raw(Box::new(VlEngine { engine }));
        Ok(())
    })
}

/// Creates an engine from a TOML settings file (NULL for defaults), with
/// `VL_*` environment overrides applied.
///
/// # Safety
/// `config_path` must be NULL or a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vl_engine_from_config(config_path: *const c_char, out: *mut *mut VlEngine) -> VlStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure(VlStatus::NullArgument, "out is NULL".into()));
        }
        let path = if config_path.is_null() {
            None
        } else {
            Some(Path::new(str_arg(config_path, "config_path")?))
        };
        let engine = Settings::resolve(path)?.build_engine()?;
        *out = Box::into_raw(Box::new(VlEngine { engine }));
        Ok(())
    })
}

/// Destroys an engine. NULL is ignored.
///
/// # Safety
/// `engine` must come from `vl_engine_new`/`vl_engine_from_config` and not
/// have been freed.
#[no_mangle]
pub unsafe extern "C" fn vl_engine_free(engine: *mut VlEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Number of indexed documents; 0 for a NULL handle.
///
/// # Safety
/// `engine` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vl_engine_count(engine: *const VlEngine) -> usize {
    engine.as_ref().map_or(0, |e| e.engine.index().count())
}

/// Inserts or replaces one document given as JSON (`id`, `title`,
/// `vector`, optional `media_ref` and `metadata`).
///
/// # Safety
/// `engine` must be a live handle and `document_json` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vl_engine_upsert_json(engine: *const VlEngine, document_json: *const c_char) -> VlStatus {
    guard(|| {
        let engine = engine_ref(engine)?;
        let doc: Document = api::parse_json(str_arg(document_json, "document_json")?.as_bytes())?;
        engine.index().upsert(doc)?;
        Ok(())
    })
}

/// Ingests a JSONL corpus; `out_report` receives the ingestion report JSON.
///
/// # Safety
/// `engine` must be a live handle, `path` a NUL-terminated string and
/// `out_report` valid.
#[no_mangle]
pub unsafe extern "C" fn vl_engine_ingest_jsonl(
    engine: *const VlEngine,
    path: *const c_char,
    embed_missing: bool,
    out_report: *mut *mut c_char,
) -> VlStatus {
    guard(|| {
        let engine = engine_ref(engine)?;
        let path = Path::new(str_arg(path, "path")?);
        let report = engine.index().ingest_jsonl(path, embed_missing, engine.embedder())?;
        write_json(out_report, &report)
    })
}

/// Runs a search. `query_json` is a query spec; the response matches the
/// service's search response.
///
/// # Safety
/// `engine` must be a live handle, `query_json` a NUL-terminated string and
/// `out_json` valid.
#[no_mangle]
pub unsafe extern "C" fn vl_engine_search_json(
    engine: *const VlEngine,
    query_json: *const c_char,
    debug: bool,
    out_json: *mut *mut c_char,
) -> VlStatus {
    guard(|| {
        let engine = engine_ref(engine)?;
        let spec = api::parse_json(str_arg(query_json, "query_json")?.as_bytes())?;
        write_json(out_json, &api::search(engine, &spec, debug)?)
    })
}

/// Recommends documents for `{"seed_ids": [...], "k": n}`.
///
/// # Safety
/// As for [`vl_engine_search_json`].
#[no_mangle]
pub unsafe extern "C" fn vl_engine_recommend_json(
    engine: *const VlEngine,
    request_json: *const c_char,
    out_json: *mut *mut c_char,
) -> VlStatus {
    guard(|| {
        let engine = engine_ref(engine)?;
        let req = api::parse_json(str_arg(request_json, "request_json")?.as_bytes())?;
        write_json(out_json, &api::recommend(engine, &req)?)
    })
}

/// Runs a recommendation walk for a walk request and returns the tree.
///
/// # Safety
/// As for [`vl_engine_search_json`].
#[no_mangle]
pub unsafe extern "C" fn vl_engine_walk_json(
    engine: *const VlEngine,
    request_json: *const c_char,
    out_json: *mut *mut c_char,
) -> VlStatus {
    guard(|| {
        let engine = engine_ref(engine)?;
        let req = api::parse_json(str_arg(request_json, "request_json")?.as_bytes())?;
        write_json(out_json, &api::walk(engine, &req)?)
    })
}

/// Writes the index snapshot (JSONL, sorted by id) to `path`.
///
/// # Safety
/// `engine` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vl_engine_save_snapshot(engine: *const VlEngine, path: *const c_char) -> VlStatus {
    guard(|| {
        let engine = engine_ref(engine)?;
        engine.index().save_snapshot(Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Replaces the index with the snapshot at `path`. On failure the index
/// is unchanged.
///
/// # Safety
/// `engine` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vl_engine_restore_snapshot(engine: *const VlEngine, path: *const c_char) -> VlStatus {
    guard(|| {
        let engine = engine_ref(engine)?;
        engine.index().restore_snapshot(Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Normalizes `v` into `out`.
///
/// # Safety
/// `v` and `out` must each point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn vl_normalize(v: *const f64, dim: usize, out: *mut f64) -> VlStatus {
    guard(|| write_vector(out, &vecmath::normalize(slice_arg(v, dim, "v")?)?))
}

/// Spherical interpolation from `a` (t = 0) to `b` (t = 1).
///
/// # Safety
/// `a`, `b` and `out` must each point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn vl_slerp(a: *const f64, b: *const f64, dim: usize, t: f64, out: *mut f64) -> VlStatus {
    guard(|| {
        let a = UnitVector::from_components(slice_arg(a, dim, "a")?.to_vec())?;
        let b = UnitVector::from_components(slice_arg(b, dim, "b")?.to_vec())?;
        write_vector(out, &vecmath::slerp2(&a, &b, t)?)
    })
}

/// Normalized weighted sum of `n` vectors; weights may be negative.
///
/// # Safety
/// `vectors` must point to `n * dim` doubles, `weights` to `n`, `out` to `dim`.
#[no_mangle]
pub unsafe extern "C" fn vl_lerp_combine(
    vectors: *const f64,
    weights: *const f64,
    n: usize,
    dim: usize,
    out: *mut f64,
) -> VlStatus {
    guard(|| write_vector(out, &vecmath::lerp_combine(&rows(vectors, weights, n, dim)?)?))
}

/// Pairwise weighted slerp reduction of `n` vectors; weights must be positive.
///
/// # Safety
/// As for [`vl_lerp_combine`].
#[no_mangle]
pub unsafe extern "C" fn vl_hierarchical_slerp(
    vectors: *const f64,
    weights: *const f64,
    n: usize,
    dim: usize,
    out: *mut f64,
) -> VlStatus {
    guard(|| write_vector(out, &vecmath::hierarchical_slerp(&rows(vectors, weights, n, dim)?)?))
}

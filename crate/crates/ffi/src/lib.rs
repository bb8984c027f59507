//! C interface to the worksight engine.
//!
//! Handles are opaque and owned by the caller: every `*_open`/`*_load`
//! has a matching `*_free`. Functions return a [`WsStatus`]; on failure
//! [`ws_last_error`] describes the problem for the calling thread. Strings
//! handed out by the library are freed with [`ws_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use worksight::service::pipeline::{self, ExplainOptions, RecordInput, TrainRequest};
use worksight::service::{ModelDocument, Registry, ServiceError};
use worksight::simulator::{generate_corpus, CorpusConfig};
use worksight::store::Store;

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WsStatus {
    Ok = 0,
    /// Null pointer or non-UTF-8 string argument.
    InvalidArgument = 1,
    /// The request or record breaks a documented rule.
    Validation = 2,
    NotFound = 3,
    DuplicateId = 4,
    /// Storage, numerical or unexpected failure.
    Internal = 5,
}

/// An open store together with its model registry.
pub struct WsStore {
    store: Store,
    registry: Registry,
}

/// A registered model loaded for prediction.
pub struct WsModel {
    doc: ModelDocument,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: WsStatus, msg: impl Into<String>) -> WsStatus {
    set_error(msg);
    status
}

fn service_status(e: &ServiceError) -> WsStatus {
    match e.code() {
        "DuplicateId" => WsStatus::DuplicateId,
        "NotFound" => WsStatus::NotFound,
        _ if e.is_validation() => WsStatus::Validation,
        _ => WsStatus::Internal,
    }
}

fn from_service(e: ServiceError) -> WsStatus {
    let status = service_status(&e);
    fail(status, format!("{}: {e}", e.code()))
}

/// Runs `f`, turning panics into `Internal`.
fn guard(f: impl FnOnce() -> Result<(), WsStatus>) -> WsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WsStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(WsStatus::Internal, "panic inside worksight"),
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, WsStatus> {
    if p.is_null() {
        return Err(fail(WsStatus::InvalidArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(WsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, WsStatus> {
    p.as_mut().ok_or_else(|| fail(WsStatus::InvalidArgument, format!("{what} is null")))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), WsStatus> {
    if out.is_null() {
        return Err(fail(WsStatus::InvalidArgument, "output pointer is null"));
    }
    let c = CString::new(s).map_err(|_| fail(WsStatus::Internal, "output contains a NUL byte"))?;
    *out = c.into_raw();
    Ok(())
}

fn json<T: serde::Serialize>(v: &T) -> Result<String, WsStatus> {
    serde_json::to_string(v).map_err(|e| fail(WsStatus::Internal, e.to_string()))
}

fn parse<T: for<'de> serde::Deserialize<'de>>(s: &str) -> Result<T, WsStatus> {
    serde_json::from_str(s).map_err(|e| fail(WsStatus::Validation, format!("InvalidRequest: {e}")))
}

/// Message of the last failure on this thread, or null. Free with
/// [`ws_string_free`].
#[no_mangle]
pub extern "C" fn ws_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |m| m.clone().into_raw()))
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ws_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version, statically allocated.
#[no_mangle]
pub extern "C" fn ws_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Opens (creating when missing) the store at `root`.
///
/// # Safety
/// `root` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ws_store_open(root: *const c_char, out: *mut *mut WsStore) -> WsStatus {
    guard(|| {
        let root = text(root, "root")?;
        if out.is_null() {
            return Err(fail(WsStatus::InvalidArgument, "output pointer is null"));
        }
        let store = Store::open(root).map_err(|e| from_service(e.into()))?;
        let registry = Registry::for_store(root).map_err(from_service)?;
        *out = Box::into_raw(Box::new(WsStore { store, registry }));
        Ok(())
    })
}

/// # Safety
/// `store` must come from [`ws_store_open`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ws_store_free(store: *mut WsStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Number of stored tasks.
///
/// # Safety
/// `store` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn ws_store_session_count(store: *const WsStore) -> usize {
    store.as_ref().map_or(0, |s| s.store.sessions().len())
}

/// Number of stored pieces.
///
/// # Safety
/// `store` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn ws_store_piece_count(store: *const WsStore) -> usize {
    store.as_ref().map_or(0, |s| s.store.pieces().len())
}

/// Ingests one piece JSON document.
///
/// # Safety
/// `store` must be a live handle and `doc` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ws_ingest_piece(store: *mut WsStore, doc: *const c_char) -> WsStatus {
    guard(|| {
        let s = handle(store, "store")?;
        let doc = text(doc, "doc")?;
        s.store.ingest_piece(doc).map(|_| ()).map_err(|e| from_service(e.into()))
    })
}

/// Ingests one task JSON document.
///
/// # Safety
/// `store` must be a live handle and `doc` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ws_ingest_session(store: *mut WsStore, doc: *const c_char) -> WsStatus {
    guard(|| {
        let s = handle(store, "store")?;
        let doc = text(doc, "doc")?;
        s.store.ingest_session(doc).map(|_| ()).map_err(|e| from_service(e.into()))
    })
}

/// Appends the default synthetic corpus for `seed`.
///
/// # Safety
/// `store` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ws_simulate(store: *mut WsStore, seed: u64) -> WsStatus {
    guard(|| {
        let s = handle(store, "store")?;
        let corpus = generate_corpus(&CorpusConfig { seed, ..CorpusConfig::default() });
        corpus.populate(&mut s.store).map_err(|e| from_service(e.into()))?;
        s.store.persist_index().map_err(|e| from_service(e.into()))
    })
}

/// Trains and registers a model from a JSON training request; writes the
/// registry entry as JSON to `out_entry`.
///
/// # Safety
/// `store` must be a live handle, `request` a NUL-terminated string and
/// `out_entry` writable.
#[no_mangle]
pub unsafe extern "C" fn ws_train(
    store: *mut WsStore,
    request: *const c_char,
    out_entry: *mut *mut c_char,
) -> WsStatus {
    guard(|| {
        let s = handle(store, "store")?;
        let req: TrainRequest = parse(text(request, "request")?)?;
        let entry = pipeline::train(&s.store, &mut s.registry, &req).map_err(from_service)?;
        write_string(out_entry, json(&entry)?)
    })
}

/// Loads a registered model by id.
///
/// # Safety
/// `store` must be a live handle, `model_id` a NUL-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ws_model_load(
    store: *const WsStore,
    model_id: *const c_char,
    out: *mut *mut WsModel,
) -> WsStatus {
    guard(|| {
        let s = store.as_ref().ok_or_else(|| fail(WsStatus::InvalidArgument, "store is null"))?;
        let id = text(model_id, "model_id")?;
        if out.is_null() {
            return Err(fail(WsStatus::InvalidArgument, "output pointer is null"));
        }
        let doc = s.registry.get(id).map_err(from_service)?.clone();
        *out = Box::into_raw(Box::new(WsModel { doc }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`ws_model_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ws_model_free(model: *mut WsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of features the model expects.
///
/// # Safety
/// `model` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn ws_model_feature_count(model: *const WsModel) -> usize {
    model.as_ref().map_or(0, |m| m.doc.model.n_features())
}

/// Class probabilities `[P(expert), P(inexpert)]` for a raw feature row in
/// the model's column order.
///
/// # Safety
/// `row` must point to `len` doubles and `out` to two writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ws_model_predict_proba(
    model: *const WsModel,
    row: *const f64,
    len: usize,
    out: *mut f64,
) -> WsStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| fail(WsStatus::InvalidArgument, "model is null"))?;
        if row.is_null() || out.is_null() {
            return Err(fail(WsStatus::InvalidArgument, "row or output is null"));
        }
        let row = std::slice::from_raw_parts(row, len);
        m.doc.model.check_row(row).map_err(|e| from_service(e.into()))?;
        let p = m.doc.model.predict_proba(row);
        *out = p[0];
        *out.add(1) = p[1];
        Ok(())
    })
}

/// Classifies a JSON record (see the HTTP `record` field) and writes the
/// prediction as JSON.
///
/// # Safety
/// Handles must be live, `record` NUL-terminated and `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn ws_model_predict(
    store: *const WsStore,
    model: *const WsModel,
    record: *const c_char,
    out_json: *mut *mut c_char,
) -> WsStatus {
    guard(|| {
        let s = store.as_ref().ok_or_else(|| fail(WsStatus::InvalidArgument, "store is null"))?;
        let m = model.as_ref().ok_or_else(|| fail(WsStatus::InvalidArgument, "model is null"))?;
        let value = parse(text(record, "record")?)?;
        let input = RecordInput::from_value(value).map_err(from_service)?;
        let p = pipeline::predict(&s.store, &m.doc, input).map_err(from_service)?;
        write_string(out_json, json(&p)?)
    })
}

/// Explains a JSON record and writes the rendered report text.
///
/// # Safety
/// Handles must be live, `record` NUL-terminated and `out_report` writable.
#[no_mangle]
pub unsafe extern "C" fn ws_model_explain(
    store: *const WsStore,
    model: *const WsModel,
    record: *const c_char,
    seed: u64,
    out_report: *mut *mut c_char,
) -> WsStatus {
    guard(|| {
        let s = store.as_ref().ok_or_else(|| fail(WsStatus::InvalidArgument, "store is null"))?;
        let m = model.as_ref().ok_or_else(|| fail(WsStatus::InvalidArgument, "model is null"))?;
        let value = parse(text(record, "record")?)?;
        let input = RecordInput::from_value(value).map_err(from_service)?;
        let opts = ExplainOptions { seed: Some(seed), ..ExplainOptions::default() };
        let r = pipeline::explain(&s.store, &m.doc, input, &opts).map_err(from_service)?;
        write_string(out_report, r.report)
    })
}

/// KPI snapshot, baselines and verdicts for `worker` on `date`
/// (`YYYY-MM-DD`), as JSON.
///
/// # Safety
/// `store` must be live, strings NUL-terminated and `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn ws_kpis(
    store: *const WsStore,
    worker: *const c_char,
    date: *const c_char,
    out_json: *mut *mut c_char,
) -> WsStatus {
    guard(|| {
        let s = store.as_ref().ok_or_else(|| fail(WsStatus::InvalidArgument, "store is null"))?;
        let worker = text(worker, "worker")?;
        let date = text(date, "date")?;
        let date = chrono_date(date)?;
        let report = pipeline::kpi_report(&s.store, &worker.into(), date);
        write_string(out_json, json(&report)?)
    })
}

fn chrono_date(s: &str) -> Result<chrono::NaiveDate, WsStatus> {
    s.parse().map_err(|_| fail(WsStatus::Validation, format!("InvalidRequest: bad date {s:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use worksight::store::StoreError;

    fn last() -> String {
        LAST_ERROR.with(|e| e.borrow().as_ref().map(|m| m.to_str().unwrap().to_owned()).unwrap_or_default())
    }

    #[test]
    fn service_errors_map_to_statuses() {
        let dup = ServiceError::Store(StoreError::DuplicateId("piece 1".into()));
        assert_eq!(service_status(&dup), WsStatus::DuplicateId);
        assert_eq!(service_status(&ServiceError::NotFound("m1".into())), WsStatus::NotFound);
        assert_eq!(service_status(&ServiceError::InvalidRequest("x".into())), WsStatus::Validation);
    }

    #[test]
    fn guard_catches_panics() {
        assert_eq!(guard(|| panic!("boom")), WsStatus::Internal);
        assert!(last().contains("panic"));
        assert_eq!(guard(|| Ok(())), WsStatus::Ok);
    }

    #[test]
    fn parse_failures_are_validation_errors() {
        assert_eq!(parse::<serde_json::Value>("{").unwrap_err(), WsStatus::Validation);
        assert!(last().starts_with("InvalidRequest"));
    }

    #[test]
    fn dates_are_iso() {
        assert!(chrono_date("2023-03-08").is_ok());
        assert_eq!(chrono_date("8 March").unwrap_err(), WsStatus::Validation);
    }
}

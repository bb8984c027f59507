use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use worksight::model::{PieceEvent, PieceId, SessionId, SessionRecord, WorkerId};
use worksight::service::http::{router, AppState, SharedState};
use worksight::service::Registry;
use worksight::simulator::{generate_corpus, CorpusConfig};
use worksight::store::Store;

// 2023-06-01 08:00 UTC.
const DAY: f64 = 1_685_606_400.0;

fn state(dir: &std::path::Path) -> SharedState {
    AppState::new(Store::open(dir).unwrap(), Registry::for_store(dir).unwrap())
}

fn simulated(dir: &std::path::Path) -> SharedState {
    let mut store = Store::open(dir).unwrap();
    generate_corpus(&CorpusConfig { seed: 2, ..CorpusConfig::default() }).populate(&mut store).unwrap();
    AppState::new(store, Registry::for_store(dir).unwrap())
}

async fn call(state: &SharedState, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or(Body::empty(), |b| Body::from(b.to_string()))).unwrap();
    let res = router(state.clone()).oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value =
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

/// A task with the given piece validity, pieces 30 s apart.
fn task(id: &str, worker: &str, start: f64, valid: &[bool]) -> SessionRecord {
    let pieces: Vec<PieceEvent> = valid
        .iter()
        .enumerate()
        .map(|(i, &ok)| PieceEvent {
            piece_id: PieceId::new((i + 1).to_string()),
            session_id: SessionId::new(id),
            worker_id: WorkerId::new(worker),
            input_instant: start + 30.0 * i as f64,
            output_delay: 20.0,
            time_between_pieces: if i == 0 { 0.0 } else { 10.0 },
            valid: ok,
        })
        .collect();
    let valid_at: Vec<f64> = pieces.iter().filter(|p| p.valid).map(|p| p.input_instant).collect();
    let n = pieces.len() as u32;
    SessionRecord {
        session_id: SessionId::new(id),
        worker_id: WorkerId::new(worker),
        n_incidences: 0,
        n_invalid: valid.iter().filter(|v| !**v).count() as u32,
        n_valid: valid.iter().filter(|v| **v).count() as u32,
        n_direct_placed: n,
        n_from_tray: n,
        n_to_buffer: 0,
        n_reloads: 0,
        n_assistant_reboots: 0,
        piece_types: valid.to_vec(),
        time_between_pieces: pieces.iter().map(|p| p.time_between_pieces).collect(),
        time_between_valid: valid_at.windows(2).map(|w| w[1] - w[0]).collect(),
        total_time: 30.0 * n as f64,
        label: None,
        pieces,
    }
}

fn validity(n_valid: usize, n_invalid: usize) -> Vec<bool> {
    let mut v = vec![true; n_valid];
    v.extend(std::iter::repeat_n(false, n_invalid));
    v
}

#[tokio::test]
async fn ingest_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());
    let piece =
        json!({"piece_id":"1","session_id":"s1","worker_id":"w1","input_instant":DAY,"output_delay":20.0,"valid":true});
    let (status, body) = call(&s, "POST", "/events/pieces", Some(piece.clone())).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["ingested"], 1);
    let (status, body) = call(&s, "POST", "/events/pieces", Some(piece)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "DuplicateId");
    let bad =
        json!({"piece_id":"2","session_id":"s1","worker_id":"w1","input_instant":DAY,"output_delay":-3.0,"valid":true});
    let (status, body) = call(&s, "POST", "/events/pieces", Some(bad)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "SchemaViolation");
    let (status, _) = call(
        &s,
        "POST",
        "/events/sessions",
        Some(serde_json::to_value(task("s1", "w1", DAY, &validity(3, 1))).unwrap()),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
}

#[tokio::test]
async fn export_returns_csv() {
    let dir = tempfile::tempdir().unwrap();
    let s = simulated(dir.path());
    let (status, body) = call(&s, "GET", "/export?kind=sessions", None).await;
    assert_eq!(status, StatusCode::OK);
    let text = body.as_str().unwrap();
    assert!(text.starts_with("session_id,"));
    assert_eq!(text.lines().count(), 31);
    let (status, _) = call(&s, "GET", "/export?kind=bogus", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn train_predict_explain_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let s = simulated(dir.path());
    let req = json!({"scenario": 2, "model_spec": {"family": "random_forest", "seed": 2}});
    let (status, entry) = call(&s, "POST", "/train", Some(req)).await;
    assert_eq!(status, StatusCode::OK, "{entry}");
    let id = entry["model_id"].as_str().unwrap().to_string();
    assert!(entry["eval"]["accuracy"].as_f64().unwrap() >= 0.9);

    let (status, models) = call(&s, "GET", "/models", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(models.as_array().unwrap().len(), 1);
    let (status, metrics) = call(&s, "GET", &format!("/models/{id}/metrics"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(metrics["confusion_matrix"].is_object());
    let (status, _) = call(&s, "GET", "/models/m9999/metrics", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, p) =
        call(&s, "POST", &format!("/models/{id}/predict"), Some(json!({"record": {"session_id": "t001"}}))).await;
    assert_eq!(status, StatusCode::OK, "{p}");
    let probs = &p["probabilities"];
    assert!((probs["expert"].as_f64().unwrap() + probs["inexpert"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    let missing = json!({"record": {"features": {"f09": 3.0}}});
    let (status, err) = call(&s, "POST", &format!("/models/{id}/predict"), Some(missing)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "UnknownColumn");

    let body = json!({"record": {"session_id": "t001"}, "seed": 4, "top_k": 3});
    let (status, e) = call(&s, "POST", &format!("/models/{id}/explain"), Some(body.clone())).await;
    assert_eq!(status, StatusCode::OK, "{e}");
    assert!(e["explanation"]["terms"].as_array().unwrap().len() <= 3);
    let (_, again) = call(&s, "POST", &format!("/models/{id}/explain"), Some(body)).await;
    assert_eq!(e, again);

    let (status, r) = call(&s, "GET", "/reports/t001?seed=1", None).await;
    assert_eq!(status, StatusCode::OK);
    let report = r["report"].as_str().unwrap();
    assert!(report.contains("\n5. Summing up"), "{report}");
}

#[tokio::test]
async fn train_rejects_bad_requests() {
    let dir = tempfile::tempdir().unwrap();
    let s = simulated(dir.path());
    let (status, err) =
        call(&s, "POST", "/train", Some(json!({"scenario": 2, "model_spec": {"family": "adaboost"}, "delta": 1.5})))
            .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "InvalidDelta", "{err}");
    let (status, _) = call(&s, "POST", "/train", Some(json!({"scenario": 7}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn reports_need_a_model() {
    let dir = tempfile::tempdir().unwrap();
    let s = simulated(dir.path());
    let (status, _) = call(&s, "GET", "/reports/t001", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn kpis_route() {
    let dir = tempfile::tempdir().unwrap();
    let s = simulated(dir.path());
    let (status, k) = call(&s, "GET", "/kpis/e1?date=2023-03-07", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(k["snapshot"]["n_task"].as_u64().unwrap() >= 1);
    let (status, _) = call(&s, "GET", "/kpis/e1?date=yesterday", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&s, "GET", "/kpis/nobody", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

async fn ratio_for(tasks: &[(usize, usize)]) -> Value {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());
    let docs: Vec<Value> = tasks
        .iter()
        .enumerate()
        .map(|(i, &(v, inv))| {
            serde_json::to_value(task(&format!("r{i}"), "w9", DAY + 600.0 * i as f64, &validity(v, inv))).unwrap()
        })
        .collect();
    let (status, _) = call(&s, "POST", "/events/sessions", Some(Value::Array(docs))).await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, d) = call(&s, "GET", "/dashboard/summary?worker=w9&date=2023-06-01", None).await;
    assert_eq!(status, StatusCode::OK, "{d}");
    d
}

#[tokio::test]
async fn dashboard_valid_ratio_colour() {
    let d = ratio_for(&[(7, 3)]).await;
    assert_eq!(d["valid_ratio"]["ratio"], 0.7);
    assert_eq!(d["valid_ratio"]["green"], true);
    let d = ratio_for(&[(6, 3)]).await;
    assert_eq!(d["valid_ratio"]["numerator"], 2);
    assert_eq!(d["valid_ratio"]["denominator"], 3);
    assert_eq!(d["valid_ratio"]["green"], false);
    // (7/10 + 4/6) / 2 = 41/60 ≈ 0.683
    let d = ratio_for(&[(7, 3), (4, 2)]).await;
    assert_eq!(d["valid_ratio"]["numerator"], 41);
    assert_eq!(d["valid_ratio"]["green"], true);
    // (6/9 + 2/3) / 2 is exactly two thirds.
    let d = ratio_for(&[(6, 3), (2, 1)]).await;
    assert_eq!(d["valid_ratio"]["green"], false);
}

#[tokio::test]
async fn dashboard_summary_shape() {
    let dir = tempfile::tempdir().unwrap();
    let s = simulated(dir.path());
    call(&s, "POST", "/train", Some(json!({"scenario": 2, "model_spec": {"family": "random_forest"}}))).await;
    let (status, d) = call(&s, "GET", "/dashboard/summary?worker=e1", None).await;
    assert_eq!(status, StatusCode::OK, "{d}");
    assert_eq!(d["kpi_boxes"].as_array().unwrap().len(), 6);
    assert_eq!(d["feature_boxes"].as_array().unwrap().len(), 2);
    assert!(!d["timeline"].as_array().unwrap().is_empty());
    assert_eq!(d["model_id"], "m0001");
    for b in d["kpi_boxes"].as_array().unwrap() {
        assert!(["green", "red", "blue"].contains(&b["colour"].as_str().unwrap()));
    }
    let (status, _) = call(&s, "GET", "/dashboard/summary", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&s, "GET", "/dashboard/summary?worker=ghost", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

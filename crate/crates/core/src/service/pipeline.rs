//! Pipeline calls shared by the CLI verbs and the HTTP handlers.

use std::collections::HashMap;

use chrono::{NaiveDate, Utc};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::error::{Result, ServiceError};
use super::registry::{ModelDocument, ModelRegistryEntry, Registry, Scenario, WindowSpec, REGISTRY_FORMAT_VERSION};
use crate::explain::report::{render_piece_report, render_session_report};
use crate::explain::{explain_instance, ExplainConfig, Explanation, TrainingStats};
use crate::features::{
    piece_matrix, piece_row, post_selection_matrix, selectable_columns, session_labels, session_matrix, session_row,
    PIECE_COLUMNS,
};
use crate::kpi::{
    self, date_of, epoch_day, inter_baseline, intra_baseline, stat_of, trigger, verdict, Kpi, KpiBaseline, KpiSnapshot,
    KpiStatus, KpiVerdict,
};
use crate::learners::{self, EvalReport, LearnError, ModelSpec, TrainedModel};
use crate::model::{ExpertiseLabel, FeatureMatrix, PieceEvent, PieceId, SessionId, SessionRecord, WorkerId};
use crate::rng::derive_seed;
use crate::selection::{select, SelectionConfig, SelectionError, SelectionReport, DEFAULT_DELTA};
use crate::store::{write_csv, RecordKind, Store, TimeWindow};

pub const DEFAULT_FOLDS: usize = 10;

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

fn default_folds() -> usize {
    DEFAULT_FOLDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub scenario: Scenario,
    pub model_spec: ModelSpec,
    #[serde(default)]
    pub window: WindowSpec,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_folds")]
    pub folds: usize,
}

impl TrainRequest {
    pub fn new(scenario: Scenario, model_spec: ModelSpec) -> Self {
        Self { scenario, model_spec, window: WindowSpec::default(), delta: DEFAULT_DELTA, folds: DEFAULT_FOLDS }
    }
}

/// Labeled matrix of `scenario` over the records in `window`.
///
/// Pieces take their labels from the stored task they belong to; pieces and
/// tasks without a label are left out.
pub fn scenario_matrix(store: &Store, scenario: Scenario, window: &TimeWindow) -> Result<FeatureMatrix> {
    let matrix = match scenario {
        Scenario::Piece => {
            let labels = session_labels(store.sessions());
            piece_matrix(&store.query_pieces(window, None), Some(&labels))
        }
        Scenario::Session => {
            let sessions: Vec<SessionRecord> =
                store.query_sessions(window, None).into_iter().filter(|s| s.label.is_some()).collect();
            session_matrix(&sessions)?
        }
    };
    if matrix.n_rows() == 0 {
        return Err(LearnError::EmptyDataset.into());
    }
    Ok(matrix)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateOutcome {
    pub scenario: Scenario,
    pub feature_names: Vec<String>,
    pub selection: SelectionReport,
    pub eval: EvalReport,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub evaluation: EvaluateOutcome,
    pub model: TrainedModel,
    pub training_stats: TrainingStats,
    /// Post-selection training matrix.
    pub matrix: FeatureMatrix,
}

fn check_request(req: &TrainRequest) -> Result<TimeWindow> {
    if !(0.0..1.0).contains(&req.delta) {
        return Err(SelectionError::InvalidDelta(req.delta).into());
    }
    if req.folds < 2 {
        return Err(LearnError::InvalidParameter("folds must be at least 2".into()).into());
    }
    req.model_spec.validate()?;
    Ok(req.window.to_window()?)
}

fn selected_matrix(store: &Store, req: &TrainRequest) -> Result<(SelectionReport, FeatureMatrix)> {
    let window = check_request(req)?;
    let matrix = scenario_matrix(store, req.scenario, &window)?;
    let config = SelectionConfig {
        delta: req.delta,
        seed: derive_seed(req.model_spec.seed, "select"),
        ..SelectionConfig::default()
    };
    let report = select(&matrix, &config)?;
    let chosen = report.ordered_final(&matrix);
    if chosen.is_empty() {
        return Err(LearnError::NoFeatures.into());
    }
    let reduced = post_selection_matrix(&matrix, &chosen)?;
    Ok((report, reduced))
}

/// Selection and k-fold evaluation, without fitting a final model.
pub fn evaluate(store: &Store, req: &TrainRequest) -> Result<EvaluateOutcome> {
    let (selection, matrix) = selected_matrix(store, req)?;
    let eval = learners::evaluate(&req.model_spec, &matrix, req.folds)?;
    Ok(EvaluateOutcome { scenario: req.scenario, feature_names: matrix.column_names.clone(), selection, eval })
}

/// Selection, evaluation and a final fit on the whole selected matrix.
pub fn fit(store: &Store, req: &TrainRequest) -> Result<TrainOutcome> {
    let (selection, matrix) = selected_matrix(store, req)?;
    let eval = learners::evaluate(&req.model_spec, &matrix, req.folds)?;
    let model = learners::train(&req.model_spec, &matrix)?;
    let training_stats = TrainingStats::from_matrix(&matrix)?;
    Ok(TrainOutcome {
        evaluation: EvaluateOutcome {
            scenario: req.scenario,
            feature_names: matrix.column_names.clone(),
            selection,
            eval,
        },
        model,
        training_stats,
        matrix,
    })
}

pub fn train(store: &Store, registry: &mut Registry, req: &TrainRequest) -> Result<ModelRegistryEntry> {
    let outcome = fit(store, req)?;
    register(registry, req, outcome)
}

/// Stores a fitted outcome and returns its new registry entry.
pub fn register(registry: &mut Registry, req: &TrainRequest, outcome: TrainOutcome) -> Result<ModelRegistryEntry> {
    let doc = ModelDocument {
        version: REGISTRY_FORMAT_VERSION,
        entry: ModelRegistryEntry {
            model_id: String::new(),
            scenario: req.scenario,
            spec: req.model_spec.clone(),
            delta: req.delta,
            window: req.window,
            feature_names: outcome.evaluation.feature_names,
            selection: outcome.evaluation.selection,
            eval: outcome.evaluation.eval,
            created_at: Utc::now(),
        },
        training_stats: outcome.training_stats,
        model: outcome.model,
    };
    registry.register(doc)
}

/// A record to classify: named features, a full document, or a stored one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RecordInput {
    Features {
        features: HashMap<String, f64>,
        #[serde(default)]
        id: Option<String>,
    },
    Session(SessionRecord),
    Piece(PieceEvent),
    Stored {
        session_id: SessionId,
        #[serde(default)]
        piece_id: Option<PieceId>,
    },
}

impl RecordInput {
    pub fn from_value(value: Value) -> Result<Self> {
        serde_json::from_value(value).map_err(|_| {
            ServiceError::InvalidRequest(
                "record must hold `features`, a session or piece document, or a stored `session_id`".into(),
            )
        })
    }
}

/// A record resolved into the model's feature space.
#[derive(Debug, Clone)]
pub struct Instance {
    pub id: String,
    pub worker: Option<WorkerId>,
    pub piece_id: Option<PieceId>,
    pub date: Option<NaiveDate>,
    pub row: Vec<f64>,
}

fn named(columns: &[String], row: Vec<f64>) -> HashMap<String, f64> {
    columns.iter().cloned().zip(row).collect()
}

/// Earliest input instant of the piece's task, from the store when known.
fn session_start(store: &Store, piece: &PieceEvent) -> f64 {
    let stored = store.find_session(&piece.session_id).and_then(SessionRecord::start_time).unwrap_or(f64::INFINITY);
    store
        .pieces()
        .iter()
        .filter(|p| p.session_id == piece.session_id)
        .map(|p| p.input_instant)
        .fold(stored.min(piece.input_instant), f64::min)
}

fn stored_piece(store: &Store, session: &SessionId, piece: &PieceId) -> Option<PieceEvent> {
    store
        .find_piece(session, piece)
        .cloned()
        .or_else(|| store.find_session(session).and_then(|s| s.pieces.iter().find(|p| &p.piece_id == piece).cloned()))
}

pub fn resolve(store: &Store, doc: &ModelDocument, input: RecordInput) -> Result<Instance> {
    let scenario = doc.entry.scenario;
    let model = &doc.model;
    let (id, worker, piece_id, date, features) = match input {
        RecordInput::Features { features, id } => (id.unwrap_or_else(|| "record".into()), None, None, None, features),
        RecordInput::Stored { session_id, piece_id } => match (scenario, piece_id) {
            (Scenario::Session, Some(_)) => {
                return Err(ServiceError::InvalidRequest("task-level model given a piece reference".into()));
            }
            (Scenario::Session, None) => {
                let s = store
                    .find_session(&session_id)
                    .ok_or_else(|| ServiceError::NotFound(format!("session {session_id}")))?;
                return resolve(store, doc, RecordInput::Session(s.clone()));
            }
            (Scenario::Piece, Some(pid)) => {
                let p = stored_piece(store, &session_id, &pid)
                    .ok_or_else(|| ServiceError::NotFound(format!("piece {pid} of session {session_id}")))?;
                return resolve(store, doc, RecordInput::Piece(p));
            }
            (Scenario::Piece, None) => {
                return Err(ServiceError::InvalidRequest("piece-level models need a piece_id".into()));
            }
        },
        RecordInput::Session(s) => {
            if scenario != Scenario::Session {
                return Err(ServiceError::InvalidRequest("piece-level model given a session record".into()));
            }
            let row = session_row(&s)?;
            let date = s.start_time().map(date_of);
            (s.session_id.to_string(), Some(s.worker_id.clone()), None, date, named(&selectable_columns(), row))
        }
        RecordInput::Piece(p) => {
            if scenario != Scenario::Piece {
                return Err(ServiceError::InvalidRequest("task-level model given a piece record".into()));
            }
            let cols: Vec<String> = PIECE_COLUMNS.iter().map(|c| c.to_string()).collect();
            let row = piece_row(&p, session_start(store, &p));
            (
                format!("{}/{}", p.session_id, p.piece_id),
                Some(p.worker_id.clone()),
                Some(p.piece_id.clone()),
                Some(date_of(p.input_instant)),
                named(&cols, row),
            )
        }
    };
    let row = model.row_from_named(&features)?;
    Ok(Instance { id, worker, piece_id, date, row })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probabilities {
    pub expert: f64,
    pub inexpert: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub model_id: String,
    pub instance_id: String,
    pub label: ExpertiseLabel,
    pub confidence: f64,
    pub probabilities: Probabilities,
}

fn predict_row(doc: &ModelDocument, id: String, row: &[f64]) -> Prediction {
    let p = doc.model.predict_proba(row);
    let label = learners::argmax_label(p);
    Prediction {
        model_id: doc.entry.model_id.clone(),
        instance_id: id,
        label,
        confidence: p[label.class_index()],
        probabilities: Probabilities { expert: p[0], inexpert: p[1] },
    }
}

pub fn predict(store: &Store, doc: &ModelDocument, input: RecordInput) -> Result<Prediction> {
    let inst = resolve(store, doc, input)?;
    Ok(predict_row(doc, inst.id, &inst.row))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExplainOptions {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub n_samples: Option<usize>,
    #[serde(default)]
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainResponse {
    pub model_id: String,
    pub scenario: Scenario,
    pub explanation: Explanation,
    pub report: String,
}

pub fn explain(
    store: &Store,
    doc: &ModelDocument,
    input: RecordInput,
    opts: &ExplainOptions,
) -> Result<ExplainResponse> {
    let inst = resolve(store, doc, input)?;
    let defaults = ExplainConfig::default();
    let config = ExplainConfig {
        n_samples: opts.n_samples.unwrap_or(defaults.n_samples),
        top_k: opts.top_k.unwrap_or(defaults.top_k),
        ..defaults
    };
    let seed = opts.seed.unwrap_or_else(|| derive_seed(doc.model.spec.seed, &format!("explain/{}", inst.id)));
    let explanation = explain_instance(&doc.model, &inst.id, &inst.row, &doc.training_stats, &config, seed)?;
    let worker = inst.worker.as_ref().map(|w| w.to_string()).unwrap_or_else(|| "unknown".into());
    let report = match doc.entry.scenario {
        Scenario::Piece => {
            let piece = inst.piece_id.as_ref().map(|p| p.to_string()).unwrap_or_else(|| inst.id.clone());
            render_piece_report(&explanation, &piece, &worker)
        }
        Scenario::Session => {
            let (intra, inter) = match (&inst.worker, inst.date) {
                (Some(w), Some(d)) => {
                    let k = kpi_report(store, w, d);
                    (k.intra_verdict, k.inter_verdict)
                }
                _ => (KpiVerdict::neutral(), KpiVerdict::neutral()),
            };
            render_session_report(&explanation, &intra, &inter, &inst.id, &worker)
        }
    };
    Ok(ExplainResponse { model_id: doc.entry.model_id.clone(), scenario: doc.entry.scenario, explanation, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub snapshot: KpiSnapshot,
    pub intra_baseline: KpiBaseline,
    pub inter_baseline: KpiBaseline,
    pub intra_verdict: KpiVerdict,
    pub inter_verdict: KpiVerdict,
}

pub fn kpi_report(store: &Store, worker: &WorkerId, date: NaiveDate) -> KpiReport {
    let snapshot = kpi::daily_kpis(store, worker, date);
    let intra_baseline = intra_baseline(store, worker, date);
    let inter_baseline = inter_baseline(store, date, worker);
    let intra_verdict = verdict(&snapshot, &intra_baseline);
    let inter_verdict = verdict(&snapshot, &inter_baseline);
    KpiReport { snapshot, intra_baseline, inter_baseline, intra_verdict, inter_verdict }
}

/// Date of the worker's most recent stored task.
pub fn latest_date(store: &Store, worker: &WorkerId) -> Option<NaiveDate> {
    store
        .sessions()
        .iter()
        .filter(|s| &s.worker_id == worker)
        .filter_map(SessionRecord::start_time)
        .max_by(f64::total_cmp)
        .map(date_of)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelinePoint {
    pub session_id: String,
    pub start_time: f64,
    pub label: Option<ExpertiseLabel>,
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiBox {
    pub kpi: Kpi,
    pub symbol: String,
    pub description: String,
    pub value: f64,
    /// Against the worker's own previous week.
    pub status: KpiStatus,
    pub colour: String,
    /// Against the other workers on the same day.
    pub inter_status: KpiStatus,
    pub inter_colour: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBox {
    pub feature: String,
    pub name: String,
    pub unit: String,
    pub value: Option<f64>,
    pub status: KpiStatus,
    pub colour: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidRatioBox {
    pub ratio: f64,
    pub numerator: i64,
    pub denominator: i64,
    pub green: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DashboardSummary {
    pub worker_id: WorkerId,
    pub date: NaiveDate,
    pub model_id: Option<String>,
    pub timeline: Vec<TimelinePoint>,
    pub kpi_boxes: Vec<KpiBox>,
    pub feature_boxes: Vec<FeatureBox>,
    pub valid_ratio: ValidRatioBox,
}

/// Dashboard feature boxes with the direction that counts as expert-like.
pub const FEATURE_BOXES: [(&str, bool); 2] = [("f09", true), ("f03(avg)", false)];

/// Mean over tasks of each task's valid share, kept exact.
pub fn mean_valid_ratio(sessions: &[&SessionRecord]) -> Ratio<i64> {
    if sessions.is_empty() {
        return Ratio::from_integer(0);
    }
    let sum = sessions
        .iter()
        .map(|s| {
            let total = i64::from(s.n_valid) + i64::from(s.n_invalid);
            if total == 0 {
                Ratio::from_integer(0)
            } else {
                Ratio::new(i64::from(s.n_valid), total)
            }
        })
        .fold(Ratio::from_integer(0), |a, b| a + b);
    sum / Ratio::from_integer(sessions.len() as i64)
}

/// Strictly above two thirds.
pub fn valid_ratio_box(ratio: Ratio<i64>) -> ValidRatioBox {
    ValidRatioBox {
        ratio: *ratio.numer() as f64 / *ratio.denom() as f64,
        numerator: *ratio.numer(),
        denominator: *ratio.denom(),
        green: ratio > Ratio::new(2, 3),
    }
}

fn column_value(s: &SessionRecord, column: &str) -> Option<f64> {
    let row = session_row(s).ok()?;
    let j = selectable_columns().iter().position(|c| c == column)?;
    Some(row[j])
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Feature boxes compare the day's mean with the worker's tasks of the
/// previous week, using the same applicability rule as the KPI triggers.
fn feature_boxes(store: &Store, worker: &WorkerId, date: NaiveDate) -> Vec<FeatureBox> {
    let day = epoch_day(date);
    let today = store.sessions_on_day(worker, day);
    let history: Vec<&SessionRecord> =
        (1..=kpi::INTRA_WINDOW_DAYS as i64).flat_map(|back| store.sessions_on_day(worker, day - back)).collect();
    FEATURE_BOXES
        .iter()
        .map(|&(feature, higher_is_better)| {
            let value = mean(&today.iter().filter_map(|s| column_value(s, feature)).collect::<Vec<_>>());
            let past: Vec<f64> = history.iter().filter_map(|s| column_value(s, feature)).collect();
            let status = value.map_or(KpiStatus::Neutral, |v| trigger(v, &stat_of(&past), higher_is_better));
            let info = crate::explain::catalog::feature_info(feature);
            FeatureBox {
                feature: feature.to_string(),
                name: info.name,
                unit: info.unit.to_string(),
                value,
                status,
                colour: status.colour().to_string(),
            }
        })
        .collect()
}

/// Everything the dashboard shows for one worker and day.
///
/// The timeline uses the latest task-level model when one is registered.
pub fn dashboard_summary(
    store: &Store,
    registry: &Registry,
    worker: &WorkerId,
    date: Option<NaiveDate>,
) -> Result<DashboardSummary> {
    let date = match date {
        Some(d) => d,
        None => latest_date(store, worker).ok_or_else(|| ServiceError::NotFound(format!("worker {worker}")))?,
    };
    let model = registry.latest(Scenario::Session);
    let mut sessions: Vec<&SessionRecord> =
        store.sessions().iter().filter(|s| &s.worker_id == worker && s.start_time().is_some()).collect();
    sessions.sort_by(|a, b| a.start_time().unwrap_or(0.0).total_cmp(&b.start_time().unwrap_or(0.0)));
    let timeline = sessions
        .iter()
        .map(|s| {
            let predicted = model.and_then(|doc| {
                let row = doc.model.row_from_named(&named(&selectable_columns(), session_row(s).ok()?)).ok()?;
                Some(predict_row(doc, s.session_id.to_string(), &row))
            });
            TimelinePoint {
                session_id: s.session_id.to_string(),
                start_time: s.start_time().unwrap_or(0.0),
                label: predicted.as_ref().map(|p| p.label),
                confidence: predicted.map(|p| p.confidence),
            }
        })
        .collect();

    let kpis = kpi_report(store, worker, date);
    let kpi_boxes = Kpi::ALL
        .iter()
        .map(|&k| {
            let status = kpis.intra_verdict.status(k);
            let inter_status = kpis.inter_verdict.status(k);
            KpiBox {
                kpi: k,
                symbol: k.symbol().to_string(),
                description: k.description().to_string(),
                value: kpis.snapshot.value(k),
                status,
                colour: status.colour().to_string(),
                inter_status,
                inter_colour: inter_status.colour().to_string(),
            }
        })
        .collect();

    let today = store.sessions_on_day(worker, epoch_day(date));
    Ok(DashboardSummary {
        worker_id: worker.clone(),
        date,
        model_id: model.map(|d| d.entry.model_id.clone()),
        timeline,
        kpi_boxes,
        feature_boxes: feature_boxes(store, worker, date),
        valid_ratio: valid_ratio_box(mean_valid_ratio(&today)),
    })
}

/// Outcome of ingesting one or many documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub kind: RecordKind,
    pub ingested: usize,
    pub ids: Vec<String>,
}

/// Ingests a single document or an array of them, stopping at the first
/// failure; documents before it stay committed.
pub fn ingest(store: &mut Store, kind: RecordKind, value: &Value) -> Result<IngestSummary> {
    let docs: Vec<&Value> = match value {
        Value::Array(items) => items.iter().collect(),
        other => vec![other],
    };
    let mut ids = Vec::with_capacity(docs.len());
    for doc in docs {
        let id = match kind {
            RecordKind::Pieces => {
                let p = store.ingest_piece_value(doc)?;
                format!("{}/{}", p.session_id, p.piece_id)
            }
            RecordKind::Sessions => store.ingest_session_value(doc)?.session_id.to_string(),
        };
        ids.push(id);
    }
    Ok(IngestSummary { kind, ingested: ids.len(), ids })
}

pub fn export_csv(store: &Store, kind: RecordKind, window: &TimeWindow) -> Result<String> {
    let records = store.query(kind, window, None);
    let mut buf = Vec::new();
    write_csv(&records, &mut buf)?;
    String::from_utf8(buf).map_err(|e| ServiceError::InvalidRequest(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(n_valid: u32, n_invalid: u32) -> SessionRecord {
        SessionRecord {
            session_id: "s".into(),
            worker_id: "w".into(),
            pieces: Vec::new(),
            n_incidences: 0,
            n_invalid,
            n_valid,
            n_direct_placed: 0,
            n_from_tray: 0,
            n_to_buffer: 0,
            n_reloads: 0,
            n_assistant_reboots: 0,
            piece_types: Vec::new(),
            time_between_pieces: Vec::new(),
            time_between_valid: Vec::new(),
            total_time: 1.0,
            label: None,
        }
    }

    #[test]
    fn two_thirds_is_not_green() {
        let a = session(2, 1);
        let b = session(7, 3);
        assert!(!valid_ratio_box(mean_valid_ratio(&[&a])).green);
        assert!(valid_ratio_box(mean_valid_ratio(&[&b])).green);
        let mixed = mean_valid_ratio(&[&a, &b]);
        assert_eq!(mixed, Ratio::new(41, 60));
        assert!(valid_ratio_box(Ratio::new(0, 1)).ratio == 0.0);
    }

    #[test]
    fn record_input_shapes() {
        let f = RecordInput::from_value(serde_json::json!({"features": {"f03": 1.0}})).unwrap();
        assert!(matches!(f, RecordInput::Features { .. }));
        let s = RecordInput::from_value(serde_json::json!({"session_id": "t1"})).unwrap();
        assert!(matches!(s, RecordInput::Stored { piece_id: None, .. }));
        assert!(RecordInput::from_value(serde_json::json!(3)).is_err());
    }
}

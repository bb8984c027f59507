//! Append-only document store for piece and session events.
//!
//! Layout under the root directory:
//!
//! ```text
//! <root>/pieces.ndjson     one normalized PieceEvent per line
//! <root>/sessions.ndjson   one normalized SessionRecord per line
//! <root>/index/            (worker, day) -> offsets; rebuilt from the logs when stale
//! ```
//!
//! Records are never modified once appended. A torn trailing line (a write
//! interrupted before its newline) is ignored on replay.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::model::{
    round_millis, validate_piece, validate_session, ExpertiseLabel, PieceEvent, PieceId, SessionId, SessionRecord,
    WorkerId,
};

pub const PIECES_LOG: &str = "pieces.ndjson";
pub const SESSIONS_LOG: &str = "sessions.ndjson";
pub const INDEX_DIR: &str = "index";

const SECONDS_PER_DAY: f64 = 86_400.0;

pub const PIECE_COLUMNS: [&str; 7] =
    ["piece_id", "input_instant", "output_delay", "time_between_pieces", "valid", "session_id", "worker_id"];

pub const SESSION_COLUMNS: [&str; 18] = [
    "session_id",
    "input_instants",
    "output_delays",
    "n_incidences",
    "n_invalid",
    "n_valid",
    "n_direct_placed",
    "n_from_tray",
    "n_to_buffer",
    "n_reloads",
    "n_assistant_reboots",
    "piece_types",
    "time_between_pieces",
    "time_between_valid",
    "total_time",
    "worker_id",
    "label",
    "pieces",
];

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("schema violation: {}", .0.join("; "))]
    SchemaViolation(Vec<String>),
    #[error("duplicate id: {0}")]
    DuplicateId(String),
    #[error("store unavailable: {0}")]
    StoreUnavailable(String),
    #[error("invalid time window: start {start} > end {end}")]
    InvalidWindow { start: f64, end: f64 },
    #[error("i/o failure: {0}")]
    IoFailure(#[from] io::Error),
    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, StoreError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Pieces,
    Sessions,
}

impl std::str::FromStr for RecordKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pieces" | "piece" => Ok(RecordKind::Pieces),
            "sessions" | "session" => Ok(RecordKind::Sessions),
            other => Err(format!("unknown record kind {other:?}")),
        }
    }
}

/// Closed interval `[start, end]` in epoch seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
}

impl TimeWindow {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if start > end || start.is_nan() || end.is_nan() {
            return Err(StoreError::InvalidWindow { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn all() -> Self {
        Self { start: f64::NEG_INFINITY, end: f64::INFINITY }
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t <= self.end
    }
}

impl Default for TimeWindow {
    fn default() -> Self {
        Self::all()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Records {
    Pieces(Vec<PieceEvent>),
    Sessions(Vec<SessionRecord>),
}

impl Records {
    pub fn len(&self) -> usize {
        match self {
            Records::Pieces(v) => v.len(),
            Records::Sessions(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Day number since the epoch for a timestamp.
pub fn day_of(t: f64) -> i64 {
    (t / SECONDS_PER_DAY).floor() as i64
}

type DayIndex = BTreeMap<(WorkerId, i64), Vec<usize>>;

#[derive(Serialize, Deserialize)]
struct IndexFile {
    records: usize,
    entries: Vec<(WorkerId, i64, Vec<usize>)>,
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    pieces: Vec<PieceEvent>,
    sessions: Vec<SessionRecord>,
    piece_index: DayIndex,
    session_index: DayIndex,
    piece_keys: HashSet<(SessionId, PieceId)>,
    session_keys: HashSet<SessionId>,
    last_instant: HashMap<SessionId, f64>,
    pieces_log: File,
    sessions_log: File,
}

impl Store {
    /// Opens (or creates) the store at `root` and replays both logs.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(|e| StoreError::StoreUnavailable(format!("{}: {e}", root.display())))?;
        let open_log = |name: &str| {
            OpenOptions::new()
                .create(true)
                .append(true)
                .read(true)
                .open(root.join(name))
                .map_err(|e| StoreError::StoreUnavailable(format!("{name}: {e}")))
        };
        let pieces_log = open_log(PIECES_LOG)?;
        let sessions_log = open_log(SESSIONS_LOG)?;

        let pieces: Vec<PieceEvent> = replay(&root.join(PIECES_LOG))?;
        let sessions: Vec<SessionRecord> = replay(&root.join(SESSIONS_LOG))?;

        let mut store = Store {
            root,
            pieces,
            sessions,
            piece_index: BTreeMap::new(),
            session_index: BTreeMap::new(),
            piece_keys: HashSet::new(),
            session_keys: HashSet::new(),
            last_instant: HashMap::new(),
            pieces_log,
            sessions_log,
        };
        store.rebuild_keys();
        match (store.load_index("pieces", store.pieces.len()), store.load_index("sessions", store.sessions.len())) {
            (Some(p), Some(s)) => {
                store.piece_index = p;
                store.session_index = s;
            }
            _ => store.rebuild_index()?,
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn pieces(&self) -> &[PieceEvent] {
        &self.pieces
    }

    pub fn sessions(&self) -> &[SessionRecord] {
        &self.sessions
    }

    fn rebuild_keys(&mut self) {
        self.piece_keys = self.pieces.iter().map(|p| (p.session_id.clone(), p.piece_id.clone())).collect();
        self.session_keys = self.sessions.iter().map(|s| s.session_id.clone()).collect();
        self.last_instant.clear();
        for p in &self.pieces {
            let e = self.last_instant.entry(p.session_id.clone()).or_insert(f64::NEG_INFINITY);
            *e = e.max(p.input_instant);
        }
    }

    /// Recomputes both day indexes from the in-memory logs and persists them.
    pub fn rebuild_index(&mut self) -> Result<()> {
        self.piece_index.clear();
        for (i, p) in self.pieces.iter().enumerate() {
            self.piece_index.entry((p.worker_id.clone(), day_of(p.input_instant))).or_default().push(i);
        }
        self.session_index.clear();
        for (i, s) in self.sessions.iter().enumerate() {
            if let Some(t) = s.start_time() {
                self.session_index.entry((s.worker_id.clone(), day_of(t))).or_default().push(i);
            }
        }
        self.persist_index()
    }

    /// Writes the day indexes under `<root>/index/`.
    pub fn persist_index(&self) -> Result<()> {
        let dir = self.root.join(INDEX_DIR);
        fs::create_dir_all(&dir)?;
        for (name, index, records) in
            [("pieces", &self.piece_index, self.pieces.len()), ("sessions", &self.session_index, self.sessions.len())]
        {
            let file =
                IndexFile { records, entries: index.iter().map(|((w, d), v)| (w.clone(), *d, v.clone())).collect() };
            let tmp = dir.join(format!("{name}.json.tmp"));
            fs::write(&tmp, serde_json::to_vec(&file).map_err(io::Error::other)?)?;
            fs::rename(&tmp, dir.join(format!("{name}.json")))?;
        }
        Ok(())
    }

    fn load_index(&self, name: &str, records: usize) -> Option<DayIndex> {
        let bytes = fs::read(self.root.join(INDEX_DIR).join(format!("{name}.json"))).ok()?;
        let file: IndexFile = serde_json::from_slice(&bytes).ok()?;
        if file.records != records {
            return None;
        }
        Some(file.entries.into_iter().map(|(w, d, v)| ((w, d), v)).collect())
    }

    /// Parses, normalizes, and appends one piece document.
    pub fn ingest_piece(&mut self, doc: &str) -> Result<PieceEvent> {
        let value: Value = serde_json::from_str(doc).map_err(|e| StoreError::MalformedDocument(e.to_string()))?;
        self.ingest_piece_value(&value)
    }

    pub fn ingest_piece_value(&mut self, value: &Value) -> Result<PieceEvent> {
        let piece = normalize_piece(value)?;
        self.append_piece(piece)
    }

    /// Appends an already-typed piece after validation.
    pub fn append_piece(&mut self, mut piece: PieceEvent) -> Result<PieceEvent> {
        piece.input_instant = round_millis(piece.input_instant);
        let violations = validate_piece(&piece);
        if !violations.is_empty() {
            return Err(StoreError::SchemaViolation(violations.iter().map(|v| v.to_string()).collect()));
        }
        let key = (piece.session_id.clone(), piece.piece_id.clone());
        if self.piece_keys.contains(&key) {
            return Err(StoreError::DuplicateId(format!("piece {} in session {}", piece.piece_id, piece.session_id)));
        }
        if let Some(&last) = self.last_instant.get(&piece.session_id) {
            if piece.input_instant <= last {
                return Err(StoreError::SchemaViolation(vec![
                    "input_instant not strictly increasing within session".into()
                ]));
            }
        }
        append_line(&mut self.pieces_log, &piece)?;
        let offset = self.pieces.len();
        self.piece_index.entry((piece.worker_id.clone(), day_of(piece.input_instant))).or_default().push(offset);
        self.last_instant.insert(piece.session_id.clone(), piece.input_instant);
        self.piece_keys.insert(key);
        self.pieces.push(piece.clone());
        Ok(piece)
    }

    pub fn ingest_session(&mut self, doc: &str) -> Result<SessionRecord> {
        let value: Value = serde_json::from_str(doc).map_err(|e| StoreError::MalformedDocument(e.to_string()))?;
        self.ingest_session_value(&value)
    }

    pub fn ingest_session_value(&mut self, value: &Value) -> Result<SessionRecord> {
        let obj =
            value.as_object().ok_or_else(|| StoreError::MalformedDocument("expected a key-value object".into()))?;
        let mut obj = obj.clone();
        // Pieces inherit the session's ids when the document omits them.
        if let Some(Value::Array(pieces)) = obj.get("pieces").cloned() {
            let sid = obj.get("session_id").cloned();
            let wid = obj.get("worker_id").cloned();
            let filled: Vec<Value> = pieces
                .into_iter()
                .map(|mut p| {
                    if let Value::Object(m) = &mut p {
                        for (k, v) in [("session_id", &sid), ("worker_id", &wid)] {
                            if let (false, Some(v)) = (m.contains_key(k), v) {
                                m.insert(k.into(), v.clone());
                            }
                        }
                        m.entry("time_between_pieces").or_insert(Value::from(0.0));
                    }
                    p
                })
                .collect();
            obj.insert("pieces".into(), Value::Array(filled));
        }
        let record: SessionRecord =
            serde_json::from_value(Value::Object(obj)).map_err(|e| StoreError::SchemaViolation(vec![e.to_string()]))?;
        self.append_session(record)
    }

    pub fn append_session(&mut self, mut record: SessionRecord) -> Result<SessionRecord> {
        for p in &mut record.pieces {
            p.input_instant = round_millis(p.input_instant);
        }
        let violations = validate_session(&record);
        if !violations.is_empty() {
            return Err(StoreError::SchemaViolation(violations.iter().map(|v| v.to_string()).collect()));
        }
        if self.session_keys.contains(&record.session_id) {
            return Err(StoreError::DuplicateId(format!("session {}", record.session_id)));
        }
        append_line(&mut self.sessions_log, &record)?;
        let offset = self.sessions.len();
        if let Some(t) = record.start_time() {
            self.session_index.entry((record.worker_id.clone(), day_of(t))).or_default().push(offset);
        }
        self.session_keys.insert(record.session_id.clone());
        self.sessions.push(record.clone());
        Ok(record)
    }

    fn offsets(index: &DayIndex, window: &TimeWindow, worker: &WorkerId) -> Vec<usize> {
        let lo = if window.start.is_finite() { day_of(window.start) } else { i64::MIN };
        let hi = if window.end.is_finite() { day_of(window.end) } else { i64::MAX };
        let mut out: Vec<usize> =
            index.range((worker.clone(), lo)..=(worker.clone(), hi)).flat_map(|(_, v)| v.iter().copied()).collect();
        out.sort_unstable();
        out
    }

    pub fn query_pieces(&self, window: &TimeWindow, worker: Option<&WorkerId>) -> Vec<PieceEvent> {
        let hit = |p: &PieceEvent| window.contains(p.input_instant);
        match worker {
            Some(w) => Self::offsets(&self.piece_index, window, w)
                .into_iter()
                .map(|i| &self.pieces[i])
                .filter(|p| hit(p))
                .cloned()
                .collect(),
            None => self.pieces.iter().filter(|p| hit(p)).cloned().collect(),
        }
    }

    pub fn query_sessions(&self, window: &TimeWindow, worker: Option<&WorkerId>) -> Vec<SessionRecord> {
        let hit = |s: &SessionRecord| s.start_time().is_some_and(|t| window.contains(t));
        match worker {
            Some(w) => Self::offsets(&self.session_index, window, w)
                .into_iter()
                .map(|i| &self.sessions[i])
                .filter(|s| hit(s))
                .cloned()
                .collect(),
            None => self.sessions.iter().filter(|s| hit(s)).cloned().collect(),
        }
    }

    pub fn query(&self, kind: RecordKind, window: &TimeWindow, worker: Option<&WorkerId>) -> Records {
        match kind {
            RecordKind::Pieces => Records::Pieces(self.query_pieces(window, worker)),
            RecordKind::Sessions => Records::Sessions(self.query_sessions(window, worker)),
        }
    }

    pub fn find_session(&self, id: &SessionId) -> Option<&SessionRecord> {
        self.sessions.iter().find(|s| &s.session_id == id)
    }

    pub fn find_piece(&self, session: &SessionId, piece: &PieceId) -> Option<&PieceEvent> {
        self.pieces.iter().find(|p| &p.session_id == session && &p.piece_id == piece)
    }

    /// Distinct workers with at least one stored session, sorted.
    pub fn workers(&self) -> Vec<WorkerId> {
        let mut out: Vec<WorkerId> = self.session_index.keys().map(|(w, _)| w.clone()).collect();
        out.dedup();
        out
    }

    /// Sessions of `worker` starting on epoch day `day`.
    pub fn sessions_on_day(&self, worker: &WorkerId, day: i64) -> Vec<&SessionRecord> {
        self.session_index
            .get(&(worker.clone(), day))
            .map(|v| v.iter().map(|&i| &self.sessions[i]).collect())
            .unwrap_or_default()
    }

    /// Writes the matching records as CSV and returns the data row count.
    pub fn export_csv(&self, kind: RecordKind, window: &TimeWindow, path: impl AsRef<Path>) -> Result<usize> {
        let file = File::create(path)?;
        let records = self.query(kind, window, None);
        write_csv(&records, file)
    }
}

fn append_line<T: Serialize>(file: &mut File, record: &T) -> Result<()> {
    let mut line = serde_json::to_vec(record).map_err(io::Error::other)?;
    line.push(b'\n');
    file.write_all(&line)?;
    file.flush()?;
    Ok(())
}

fn replay<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| StoreError::StoreUnavailable(format!("{}: {e}", path.display())))?;
    let mut reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut buf = String::new();
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf)?;
        if n == 0 {
            break;
        }
        if !buf.ends_with('\n') {
            // Torn final append.
            break;
        }
        let line = buf.trim();
        if line.is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line)
            .map_err(|e| StoreError::StoreUnavailable(format!("{}: corrupt record: {e}", path.display())))?;
        out.push(rec);
    }
    Ok(out)
}

fn normalize_piece(value: &Value) -> Result<PieceEvent> {
    let obj: &Map<String, Value> =
        value.as_object().ok_or_else(|| StoreError::MalformedDocument("expected a key-value object".into()))?;
    let mut problems = Vec::new();

    let mut text = |key: &str| match obj.get(key) {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => {
            problems.push(format!("{key} must be a non-empty string"));
            String::new()
        }
        None => {
            problems.push(format!("{key} is required"));
            String::new()
        }
    };
    let piece_id = text("piece_id");
    let session_id = text("session_id");
    let worker_id = text("worker_id");

    let mut number = |key: &str, default: Option<f64>| match obj.get(key) {
        Some(Value::Number(n)) => n.as_f64().unwrap_or(f64::NAN),
        None | Some(Value::Null) if default.is_some() => default.unwrap_or_default(),
        Some(_) => {
            problems.push(format!("{key} must be a number"));
            f64::NAN
        }
        None => {
            problems.push(format!("{key} is required"));
            f64::NAN
        }
    };
    let input_instant = number("input_instant", None);
    let output_delay = number("output_delay", None);
    let time_between_pieces = number("time_between_pieces", Some(0.0));

    let valid = match obj.get("valid") {
        Some(Value::Bool(b)) => *b,
        Some(_) => {
            problems.push("valid must be a boolean".into());
            false
        }
        None => {
            problems.push("valid is required".into());
            false
        }
    };

    if !problems.is_empty() {
        return Err(StoreError::SchemaViolation(problems));
    }
    let piece = PieceEvent {
        piece_id: PieceId(piece_id),
        session_id: SessionId(session_id),
        worker_id: WorkerId(worker_id),
        input_instant: round_millis(input_instant),
        output_delay,
        time_between_pieces,
        valid,
    };
    let violations = validate_piece(&piece);
    if !violations.is_empty() {
        return Err(StoreError::SchemaViolation(violations.iter().map(|v| v.to_string()).collect()));
    }
    Ok(piece)
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn json_cell<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap_or_default()
}

/// Serializes records as CSV (header row first); returns the data row count.
pub fn write_csv<W: Write>(records: &Records, w: W) -> Result<usize> {
    let mut out = csv_writer(w);
    match records {
        Records::Pieces(pieces) => {
            out.write_record(PIECE_COLUMNS)?;
            for p in pieces {
                out.write_record([
                    p.piece_id.to_string(),
                    p.input_instant.to_string(),
                    p.output_delay.to_string(),
                    p.time_between_pieces.to_string(),
                    p.valid.to_string(),
                    p.session_id.to_string(),
                    p.worker_id.to_string(),
                ])?;
            }
        }
        Records::Sessions(sessions) => {
            out.write_record(SESSION_COLUMNS)?;
            for s in sessions {
                out.write_record([
                    s.session_id.to_string(),
                    json_cell(&s.input_instants()),
                    json_cell(&s.output_delays()),
                    s.n_incidences.to_string(),
                    s.n_invalid.to_string(),
                    s.n_valid.to_string(),
                    s.n_direct_placed.to_string(),
                    s.n_from_tray.to_string(),
                    s.n_to_buffer.to_string(),
                    s.n_reloads.to_string(),
                    s.n_assistant_reboots.to_string(),
                    json_cell(&s.piece_types),
                    json_cell(&s.time_between_pieces),
                    json_cell(&s.time_between_valid),
                    s.total_time.to_string(),
                    s.worker_id.to_string(),
                    s.label.map(|l| l.as_str().to_owned()).unwrap_or_default(),
                    json_cell(&s.pieces),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(records.len())
}

fn csv_err(row: usize, msg: impl std::fmt::Display) -> StoreError {
    StoreError::SchemaViolation(vec![format!("csv row {row}: {msg}")])
}

fn parse_cell<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, row: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = rec.get(idx).ok_or_else(|| csv_err(row, format!("missing column {idx}")))?;
    raw.parse().map_err(|e| csv_err(row, e))
}

fn json_of<T: for<'de> Deserialize<'de>>(rec: &csv::StringRecord, idx: usize, row: usize) -> Result<T> {
    let raw = rec.get(idx).ok_or_else(|| csv_err(row, format!("missing column {idx}")))?;
    serde_json::from_str(raw).map_err(|e| csv_err(row, e))
}

/// Reads back a file written by [`write_csv`].
pub fn read_csv(kind: RecordKind, path: impl AsRef<Path>) -> Result<Records> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers()?.clone();
    let expected: Vec<&str> = match kind {
        RecordKind::Pieces => PIECE_COLUMNS.to_vec(),
        RecordKind::Sessions => SESSION_COLUMNS.to_vec(),
    };
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(StoreError::SchemaViolation(vec!["unexpected csv header".into()]));
    }
    match kind {
        RecordKind::Pieces => {
            let mut out = Vec::new();
            for (row, rec) in reader.records().enumerate() {
                let rec = rec?;
                out.push(PieceEvent {
                    piece_id: PieceId::new(&rec[0]),
                    input_instant: parse_cell(&rec, 1, row)?,
                    output_delay: parse_cell(&rec, 2, row)?,
                    time_between_pieces: parse_cell(&rec, 3, row)?,
                    valid: parse_cell(&rec, 4, row)?,
                    session_id: SessionId::new(&rec[5]),
                    worker_id: WorkerId::new(&rec[6]),
                });
            }
            Ok(Records::Pieces(out))
        }
        RecordKind::Sessions => {
            let mut out = Vec::new();
            for (row, rec) in reader.records().enumerate() {
                let rec = rec?;
                let label = match &rec[16] {
                    "" => None,
                    "expert" => Some(ExpertiseLabel::Expert),
                    "inexpert" => Some(ExpertiseLabel::Inexpert),
                    other => return Err(csv_err(row, format!("unknown label {other:?}"))),
                };
                out.push(SessionRecord {
                    session_id: SessionId::new(&rec[0]),
                    n_incidences: parse_cell(&rec, 3, row)?,
                    n_invalid: parse_cell(&rec, 4, row)?,
                    n_valid: parse_cell(&rec, 5, row)?,
                    n_direct_placed: parse_cell(&rec, 6, row)?,
                    n_from_tray: parse_cell(&rec, 7, row)?,
                    n_to_buffer: parse_cell(&rec, 8, row)?,
                    n_reloads: parse_cell(&rec, 9, row)?,
                    n_assistant_reboots: parse_cell(&rec, 10, row)?,
                    piece_types: json_of(&rec, 11, row)?,
                    time_between_pieces: json_of(&rec, 12, row)?,
                    time_between_valid: json_of(&rec, 13, row)?,
                    total_time: parse_cell(&rec, 14, row)?,
                    worker_id: WorkerId::new(&rec[15]),
                    label,
                    pieces: json_of(&rec, 17, row)?,
                });
            }
            Ok(Records::Sessions(out))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn doc(piece: &str, session: &str, t: f64) -> String {
        json!({
            "piece_id": piece, "session_id": session, "worker_id": "w1",
            "input_instant": t, "output_delay": 30.0, "time_between_pieces": 2.5, "valid": true
        })
        .to_string()
    }

    #[test]
    fn well_formed_piece_is_stored_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        let p = store.ingest_piece(&doc("p1", "s1", 100.0)).unwrap();
        assert_eq!(p.output_delay, 30.0);
        assert_eq!(p.time_between_pieces, 2.5);
        assert_eq!(store.query_pieces(&TimeWindow::all(), None), vec![p]);
    }

    #[test]
    fn missing_time_between_pieces_defaults_to_zero() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        let d = json!({"piece_id": "p1", "session_id": "s1", "worker_id": "w1",
                       "input_instant": 5.0, "output_delay": 12.0, "valid": false});
        let p = store.ingest_piece(&d.to_string()).unwrap();
        assert_eq!(p.time_between_pieces, 0.0);
    }

    #[test]
    fn string_negative_delay_is_schema_violation() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        let d = json!({"piece_id": "p1", "session_id": "s1", "worker_id": "w1",
                       "input_instant": 5.0, "output_delay": "-3", "valid": true});
        assert!(matches!(store.ingest_piece(&d.to_string()), Err(StoreError::SchemaViolation(_))));
        let d = json!({"piece_id": "p1", "session_id": "s1", "worker_id": "w1",
                       "input_instant": 5.0, "output_delay": -3.0, "valid": true});
        assert!(matches!(store.ingest_piece(&d.to_string()), Err(StoreError::SchemaViolation(_))));
        assert!(store.pieces().is_empty());
    }

    #[test]
    fn malformed_and_duplicate_documents() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        assert!(matches!(store.ingest_piece("{not json"), Err(StoreError::MalformedDocument(_))));
        assert!(matches!(store.ingest_piece("[1,2]"), Err(StoreError::MalformedDocument(_))));
        store.ingest_piece(&doc("p1", "s1", 1.0)).unwrap();
        assert!(matches!(store.ingest_piece(&doc("p1", "s1", 2.0)), Err(StoreError::DuplicateId(_))));
        // Same piece id in another session is fine.
        store.ingest_piece(&doc("p1", "s2", 2.0)).unwrap();
    }

    #[test]
    fn query_window_is_inclusive_and_ordered() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        assert!(store.query_pieces(&TimeWindow::new(0.0, 10.0).unwrap(), None).is_empty());
        for (i, t) in [1.0, 2.0, 3.0].into_iter().enumerate() {
            store.ingest_piece(&doc(&format!("p{i}"), "s1", t)).unwrap();
        }
        let got = store.query_pieces(&TimeWindow::new(2.0, 3.0).unwrap(), None);
        let ids: Vec<&str> = got.iter().map(|p| p.piece_id.as_str()).collect();
        assert_eq!(ids, ["p1", "p2"]);
        let w = WorkerId::new("w1");
        assert_eq!(store.query_pieces(&TimeWindow::new(2.0, 3.0).unwrap(), Some(&w)), got);
        let nobody = WorkerId::new("nobody");
        assert!(store.query_pieces(&TimeWindow::all(), Some(&nobody)).is_empty());
        assert!(TimeWindow::new(3.0, 1.0).is_err());
    }

    #[test]
    fn torn_trailing_line_is_ignored_on_replay() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut store = Store::open(dir.path()).unwrap();
            store.ingest_piece(&doc("p1", "s1", 1.0)).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(dir.path().join(PIECES_LOG)).unwrap();
        f.write_all(br#"{"piece_id":"p2","sess"#).unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.pieces().len(), 1);
    }

    #[test]
    fn empty_export_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path().join("db")).unwrap();
        let path = dir.path().join("out.csv");
        assert_eq!(store.export_csv(RecordKind::Pieces, &TimeWindow::all(), &path).unwrap(), 0);
        assert_eq!(fs::read_to_string(&path).unwrap(), format!("{}\n", PIECE_COLUMNS.join(",")));
    }

    #[test]
    fn delimiter_in_values_is_quoted() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path().join("db")).unwrap();
        let d = json!({"piece_id": "p,\"1\"", "session_id": "s1", "worker_id": "w1",
                       "input_instant": 5.0, "output_delay": 12.0, "valid": true});
        store.ingest_piece(&d.to_string()).unwrap();
        let path = dir.path().join("out.csv");
        store.export_csv(RecordKind::Pieces, &TimeWindow::all(), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("\"p,\"\"1\"\"\","));
        assert_eq!(read_csv(RecordKind::Pieces, &path).unwrap(), Records::Pieces(store.pieces().to_vec()));
    }
}

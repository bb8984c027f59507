//! Domain types shared by the whole pipeline.
//!
//! A [`PieceEvent`] is one finished piece at the workstation; a
//! [`SessionRecord`] is one worker task made of up to twelve piece attempts.
//! [`FeatureMatrix`] is the numeric, labeled table fed to selection and the
//! learners.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Valid pieces required to close a task.
pub const PROTOCOL_MAX_VALID: usize = 7;
/// Hard cap on piece attempts per task.
pub const PROTOCOL_MAX_ATTEMPTS: usize = 12;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(
    /// Operator identifier.
    WorkerId
);
string_id!(
    /// Task identifier, unique across the store.
    SessionId
);
string_id!(
    /// Piece identifier, unique within its session.
    PieceId
);

/// Skill level of the worker behind a piece or task.
///
/// The numeric encoding is fixed project-wide: `Expert` is class 0 and
/// `Inexpert` class 1. Correlation signs and `P(Inexpert)` outputs follow it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertiseLabel {
    Expert,
    Inexpert,
}

impl ExpertiseLabel {
    pub const ALL: [ExpertiseLabel; 2] = [ExpertiseLabel::Expert, ExpertiseLabel::Inexpert];

    pub fn class_index(self) -> usize {
        match self {
            ExpertiseLabel::Expert => 0,
            ExpertiseLabel::Inexpert => 1,
        }
    }

    pub fn from_class_index(idx: usize) -> Option<Self> {
        match idx {
            0 => Some(ExpertiseLabel::Expert),
            1 => Some(ExpertiseLabel::Inexpert),
            _ => None,
        }
    }

    pub fn encoded(self) -> f64 {
        self.class_index() as f64
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExpertiseLabel::Expert => "expert",
            ExpertiseLabel::Inexpert => "inexpert",
        }
    }
}

impl fmt::Display for ExpertiseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One finished piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceEvent {
    pub piece_id: PieceId,
    pub session_id: SessionId,
    pub worker_id: WorkerId,
    /// Seconds since the Unix epoch, millisecond precision.
    pub input_instant: f64,
    /// Seconds from feeding the piece until it leaves the belt.
    pub output_delay: f64,
    /// Seconds since the previous piece left the belt; 0 for the first piece.
    #[serde(default)]
    pub time_between_pieces: f64,
    pub valid: bool,
}

/// One worker task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: SessionId,
    pub worker_id: WorkerId,
    pub pieces: Vec<PieceEvent>,
    pub n_incidences: u32,
    pub n_invalid: u32,
    pub n_valid: u32,
    pub n_direct_placed: u32,
    pub n_from_tray: u32,
    pub n_to_buffer: u32,
    pub n_reloads: u32,
    pub n_assistant_reboots: u32,
    pub piece_types: Vec<bool>,
    pub time_between_pieces: Vec<f64>,
    pub time_between_valid: Vec<f64>,
    pub total_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<ExpertiseLabel>,
}

impl SessionRecord {
    /// Input instant of the first piece, or `None` for an empty task.
    pub fn start_time(&self) -> Option<f64> {
        self.pieces.first().map(|p| p.input_instant)
    }

    pub fn input_instants(&self) -> Vec<f64> {
        self.pieces.iter().map(|p| p.input_instant).collect()
    }

    pub fn output_delays(&self) -> Vec<f64> {
        self.pieces.iter().map(|p| p.output_delay).collect()
    }

    /// Input instants relative to the first piece of the task.
    pub fn input_offsets(&self) -> Vec<f64> {
        let start = self.start_time().unwrap_or(0.0);
        self.pieces.iter().map(|p| p.input_instant - start).collect()
    }

    /// Valid pieces over attempts; 0 for an empty task.
    pub fn valid_ratio(&self) -> f64 {
        let total = self.n_valid + self.n_invalid;
        if total == 0 {
            0.0
        } else {
            f64::from(self.n_valid) / f64::from(total)
        }
    }
}

/// A broken invariant on a record: which field, and the rule it breaks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self { field: field.to_owned(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Checks a single piece in isolation.
pub fn validate_piece(piece: &PieceEvent) -> Vec<Violation> {
    let mut out = Vec::new();
    if piece.piece_id.as_str().is_empty() {
        out.push(Violation::new("piece_id", "piece_id must be non-empty"));
    }
    if piece.session_id.as_str().is_empty() {
        out.push(Violation::new("session_id", "session_id must be non-empty"));
    }
    if piece.worker_id.as_str().is_empty() {
        out.push(Violation::new("worker_id", "worker_id must be non-empty"));
    }
    if !piece.input_instant.is_finite() {
        out.push(Violation::new("input_instant", "input_instant must be finite"));
    }
    if !(piece.output_delay.is_finite() && piece.output_delay > 0.0) {
        out.push(Violation::new("output_delay", "output_delay must be positive"));
    }
    if !(piece.time_between_pieces.is_finite() && piece.time_between_pieces >= 0.0) {
        out.push(Violation::new("time_between_pieces", "time_between_pieces must be non-negative"));
    }
    out
}

/// Returns every broken invariant of `record`; empty means consistent.
pub fn validate_session(record: &SessionRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    if record.session_id.as_str().is_empty() {
        out.push(Violation::new("session_id", "session_id must be non-empty"));
    }
    if record.worker_id.as_str().is_empty() {
        out.push(Violation::new("worker_id", "worker_id must be non-empty"));
    }

    let n = record.pieces.len();
    if n == 0 {
        out.push(Violation::new("pieces", "session has no pieces"));
    }
    if n > PROTOCOL_MAX_ATTEMPTS {
        out.push(Violation::new("pieces", format!("piece count exceeds protocol maximum {PROTOCOL_MAX_ATTEMPTS}")));
    }

    let mut seen = HashSet::new();
    for (i, piece) in record.pieces.iter().enumerate() {
        for v in validate_piece(piece) {
            out.push(Violation::new(&format!("pieces[{i}].{}", v.field), v.message));
        }
        if piece.session_id != record.session_id {
            out.push(Violation::new("pieces", format!("piece {} belongs to another session", piece.piece_id)));
        }
        if piece.worker_id != record.worker_id {
            out.push(Violation::new("pieces", format!("piece {} belongs to another worker", piece.piece_id)));
        }
        if !seen.insert(&piece.piece_id) {
            out.push(Violation::new("pieces", format!("duplicate piece_id {}", piece.piece_id)));
        }
        if i > 0 && piece.input_instant <= record.pieces[i - 1].input_instant {
            out.push(Violation::new("pieces", "input_instant not strictly increasing"));
        }
    }

    let valid = record.piece_types.iter().filter(|&&t| t).count();
    let invalid = record.piece_types.len() - valid;
    if record.n_valid as usize > PROTOCOL_MAX_VALID {
        out.push(Violation::new("n_valid", format!("n_valid exceeds protocol maximum {PROTOCOL_MAX_VALID}")));
    }
    if record.n_valid as usize != valid {
        out.push(Violation::new("n_valid", "n_valid mismatch"));
    }
    if record.n_invalid as usize != invalid {
        out.push(Violation::new("n_invalid", "n_invalid mismatch"));
    }
    if (record.n_valid + record.n_invalid) as usize > PROTOCOL_MAX_ATTEMPTS {
        out.push(Violation::new(
            "n_invalid",
            format!("n_valid + n_invalid exceeds protocol maximum {PROTOCOL_MAX_ATTEMPTS}"),
        ));
    }

    if record.piece_types.len() != n {
        out.push(Violation::new("piece_types", "piece_types length differs from piece count"));
    } else if record.pieces.iter().zip(&record.piece_types).any(|(p, &t)| p.valid != t) {
        out.push(Violation::new("piece_types", "piece_types disagrees with piece validity"));
    }
    if record.time_between_pieces.len() != n {
        out.push(Violation::new("time_between_pieces", "time_between_pieces length differs from piece count"));
    }
    if record.time_between_pieces.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        out.push(Violation::new("time_between_pieces", "time_between_pieces must be non-negative"));
    }
    let expected_tbv = valid.saturating_sub(1);
    if record.time_between_valid.len() != expected_tbv {
        out.push(Violation::new("time_between_valid", "time_between_valid length must be n_valid - 1"));
    }
    if record.time_between_valid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        out.push(Violation::new("time_between_valid", "time_between_valid must be non-negative"));
    }

    let delays: f64 = record.pieces.iter().map(|p| p.output_delay).sum();
    if !record.total_time.is_finite() || record.total_time + 1e-6 < delays {
        out.push(Violation::new("total_time", "total_time below sum of output delays"));
    }
    out
}

/// Rounds a timestamp to millisecond precision.
pub fn round_millis(t: f64) -> f64 {
    (t * 1000.0).round() / 1000.0
}

/// Numeric labeled dataset with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<ExpertiseLabel>>,
    /// Instance identifier per row (piece or session id); metadata only.
    #[serde(default)]
    pub row_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MatrixError {
    #[error("row {row} has width {width}, expected {expected}")]
    RaggedRow { row: usize, width: usize, expected: usize },
    #[error("duplicate column name {0}")]
    DuplicateColumn(String),
    #[error("{labels} labels for {rows} rows")]
    LabelCount { labels: usize, rows: usize },
    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: String },
    #[error("unknown column {0}")]
    UnknownColumn(String),
}

impl FeatureMatrix {
    pub fn new(
        column_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Option<Vec<ExpertiseLabel>>,
    ) -> Result<Self, MatrixError> {
        let row_ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::with_ids(column_names, rows, labels, row_ids)
    }

    pub fn with_ids(
        column_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Option<Vec<ExpertiseLabel>>,
        row_ids: Vec<String>,
    ) -> Result<Self, MatrixError> {
        let mut names = HashSet::new();
        for c in &column_names {
            if !names.insert(c.as_str()) {
                return Err(MatrixError::DuplicateColumn(c.clone()));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != column_names.len() {
                return Err(MatrixError::RaggedRow { row: i, width: row.len(), expected: column_names.len() });
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(MatrixError::NonFinite { row: i, column: column_names[j].clone() });
            }
        }
        if let Some(l) = &labels {
            if l.len() != rows.len() {
                return Err(MatrixError::LabelCount { labels: l.len(), rows: rows.len() });
            }
        }
        if row_ids.len() != rows.len() {
            return Err(MatrixError::LabelCount { labels: row_ids.len(), rows: rows.len() });
        }
        Ok(Self { column_names, rows, labels, row_ids })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Labels as class indices (Expert 0, Inexpert 1).
    pub fn class_indices(&self) -> Option<Vec<usize>> {
        self.labels.as_ref().map(|l| l.iter().map(|x| x.class_index()).collect())
    }

    /// Target encoding as floats.
    pub fn encoded_target(&self) -> Option<Vec<f64>> {
        self.labels.as_ref().map(|l| l.iter().map(|x| x.encoded()).collect())
    }

    /// Keeps the given rows in the given order.
    pub fn subset(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            column_names: self.column_names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            row_ids: idx.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }

    /// Number of stored values: rows × columns, plus one per label.
    pub fn data_value_count(&self) -> usize {
        let labels = self.labels.as_ref().map_or(0, Vec::len);
        self.n_rows() * self.n_cols() + labels
    }
}

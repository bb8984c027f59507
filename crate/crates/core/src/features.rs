//! Feature engineering for both classification scenarios.
//!
//! Piece level: `f02` (input instant, relative to the task start), `f03`
//! (output delay), `f04` (time between pieces).
//!
//! Task level: the vector features `f02`, `f03`, `f12`, `f13`, `f14` are
//! summarized as `(avg)`, `(q1)`, `(q2)`, `(q3)`; scalar counters `f04`..`f11`
//! and `f15` are kept as they are.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::model::{
    validate_session, ExpertiseLabel, FeatureMatrix, MatrixError, PieceEvent, SessionId, SessionRecord,
};

pub const PIECE_COLUMNS: [&str; 3] = ["f02", "f03", "f04"];
pub const STAT_SUFFIXES: [&str; 4] = ["avg", "q1", "q2", "q3"];
/// Vector-valued task features summarized by [`VectorStats`].
pub const VECTOR_FEATURES: [&str; 5] = ["f02", "f03", "f12", "f13", "f14"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("statistics of an empty vector")]
    EmptyVector,
    #[error("inconsistent session {session}: {}", .violations.join("; "))]
    InconsistentSession { session: String, violations: Vec<String> },
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Mean and quartiles of a numeric vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorStats {
    pub avg: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

impl VectorStats {
    pub fn constant(v: f64) -> Self {
        Self { avg: v, q1: v, q2: v, q3: v }
    }

    fn get(&self, suffix: &str) -> f64 {
        match suffix {
            "avg" => self.avg,
            "q1" => self.q1,
            "q2" => self.q2,
            _ => self.q3,
        }
    }
}

/// Linear-interpolation quantile at `p` on an ascending slice (position `p·(n−1)`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn quartiles(xs: &[f64]) -> Result<VectorStats, FeatureError> {
    if xs.is_empty() {
        return Err(FeatureError::EmptyVector);
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let avg = xs.iter().sum::<f64>() / xs.len() as f64;
    Ok(VectorStats {
        avg,
        q1: quantile_sorted(&sorted, 0.25),
        q2: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
    })
}

pub fn stat_column(feature: &str, suffix: &str) -> String {
    format!("{feature}({suffix})")
}

/// Labels keyed by task, used to label piece rows.
pub type SessionLabels = HashMap<SessionId, ExpertiseLabel>;

pub fn session_labels(sessions: &[SessionRecord]) -> SessionLabels {
    sessions.iter().filter_map(|s| s.label.map(|l| (s.session_id.clone(), l))).collect()
}

/// Piece-level matrix. Rows follow the input order; `f02` is the offset from
/// the earliest piece of the same task among `pieces`.
///
/// With `labels`, every piece whose task is unlabeled is dropped.
pub fn piece_matrix(pieces: &[PieceEvent], labels: Option<&SessionLabels>) -> FeatureMatrix {
    let mut start: HashMap<&SessionId, f64> = HashMap::new();
    for p in pieces {
        let e = start.entry(&p.session_id).or_insert(p.input_instant);
        *e = e.min(p.input_instant);
    }
    let mut rows = Vec::new();
    let mut ids = Vec::new();
    let mut out_labels = Vec::new();
    for p in pieces {
        if let Some(map) = labels {
            match map.get(&p.session_id) {
                Some(l) => out_labels.push(*l),
                None => continue,
            }
        }
        rows.push(vec![p.input_instant - start[&p.session_id], p.output_delay, p.time_between_pieces]);
        ids.push(format!("{}/{}", p.session_id, p.piece_id));
    }
    FeatureMatrix {
        column_names: PIECE_COLUMNS.iter().map(|s| s.to_string()).collect(),
        rows,
        labels: labels.map(|_| out_labels),
        row_ids: ids,
    }
}

/// Feature vector of one piece given its task's start instant.
pub fn piece_row(piece: &PieceEvent, session_start: f64) -> Vec<f64> {
    vec![piece.input_instant - session_start, piece.output_delay, piece.time_between_pieces]
}

/// One cell of the full task table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Scalar(f64),
    Vector(Vec<f64>),
    Text(String),
}

/// All 35 task columns: the 15 base features (id and vectors included) plus
/// the 20 summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTable {
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub labels: Vec<Option<ExpertiseLabel>>,
}

fn vector_features(s: &SessionRecord) -> [Vec<f64>; 5] {
    [
        s.input_offsets(),
        s.output_delays(),
        s.piece_types.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect(),
        s.time_between_pieces.clone(),
        s.time_between_valid.clone(),
    ]
}

/// Summary statistics per vector feature, in [`VECTOR_FEATURES`] order.
///
/// An empty `f14` (fewer than two valid pieces) takes `total_time` for every
/// statistic.
pub fn session_stats(s: &SessionRecord) -> Result<[VectorStats; 5], FeatureError> {
    let vecs = vector_features(s);
    let mut out = [VectorStats::constant(0.0); 5];
    for (i, v) in vecs.iter().enumerate() {
        out[i] = if v.is_empty() && VECTOR_FEATURES[i] == "f14" {
            VectorStats::constant(s.total_time)
        } else {
            quartiles(v)?
        };
    }
    Ok(out)
}

fn scalar_counters(s: &SessionRecord) -> [(&'static str, f64); 8] {
    [
        ("f04", f64::from(s.n_incidences)),
        ("f05", f64::from(s.n_invalid)),
        ("f06", f64::from(s.n_valid)),
        ("f07", f64::from(s.n_direct_placed)),
        ("f08", f64::from(s.n_from_tray)),
        ("f09", f64::from(s.n_to_buffer)),
        ("f10", f64::from(s.n_reloads)),
        ("f11", f64::from(s.n_assistant_reboots)),
    ]
}

fn check(s: &SessionRecord) -> Result<(), FeatureError> {
    let v = validate_session(s);
    if v.is_empty() {
        Ok(())
    } else {
        Err(FeatureError::InconsistentSession {
            session: s.session_id.to_string(),
            violations: v.iter().map(|x| x.to_string()).collect(),
        })
    }
}

/// Names of the 29 scalar task columns, in matrix order.
pub fn selectable_columns() -> Vec<String> {
    let mut cols = Vec::with_capacity(29);
    for f in &VECTOR_FEATURES[..2] {
        cols.extend(STAT_SUFFIXES.iter().map(|s| stat_column(f, s)));
    }
    cols.extend((4..=11).map(|i| format!("f{i:02}")));
    for f in &VECTOR_FEATURES[2..] {
        cols.extend(STAT_SUFFIXES.iter().map(|s| stat_column(f, s)));
    }
    cols.push("f15".into());
    cols
}

/// Names of all 35 task columns.
pub fn full_columns() -> Vec<String> {
    let mut cols: Vec<String> = (1..=15).map(|i| format!("f{i:02}")).collect();
    for f in VECTOR_FEATURES {
        cols.extend(STAT_SUFFIXES.iter().map(|s| stat_column(f, s)));
    }
    cols
}

/// Scalar feature vector of one task, aligned with [`selectable_columns`].
pub fn session_row(s: &SessionRecord) -> Result<Vec<f64>, FeatureError> {
    check(s)?;
    let stats = session_stats(s)?;
    let mut row = Vec::with_capacity(29);
    for st in &stats[..2] {
        row.extend(STAT_SUFFIXES.iter().map(|x| st.get(x)));
    }
    row.extend(scalar_counters(s).iter().map(|(_, v)| *v));
    for st in &stats[2..] {
        row.extend(STAT_SUFFIXES.iter().map(|x| st.get(x)));
    }
    row.push(s.total_time);
    Ok(row)
}

/// The 29-column scalar matrix used for selection and learning.
pub fn session_matrix(sessions: &[SessionRecord]) -> Result<FeatureMatrix, FeatureError> {
    let rows = sessions.iter().map(session_row).collect::<Result<Vec<_>, _>>()?;
    let labels = if sessions.iter().all(|s| s.label.is_some()) {
        Some(sessions.iter().filter_map(|s| s.label).collect())
    } else {
        None
    };
    let ids = sessions.iter().map(|s| s.session_id.to_string()).collect();
    Ok(FeatureMatrix::with_ids(selectable_columns(), rows, labels, ids)?)
}

/// The full 35-column task table.
pub fn session_table(sessions: &[SessionRecord]) -> Result<SessionTable, FeatureError> {
    let mut rows = Vec::with_capacity(sessions.len());
    for s in sessions {
        check(s)?;
        let vecs = vector_features(s);
        let stats = session_stats(s)?;
        let mut row =
            vec![Cell::Text(s.session_id.to_string()), Cell::Vector(vecs[0].clone()), Cell::Vector(vecs[1].clone())];
        row.extend(scalar_counters(s).iter().map(|(_, v)| Cell::Scalar(*v)));
        row.extend(vecs[2..].iter().map(|v| Cell::Vector(v.clone())));
        row.push(Cell::Scalar(s.total_time));
        for st in &stats {
            row.extend(STAT_SUFFIXES.iter().map(|x| Cell::Scalar(st.get(x))));
        }
        rows.push(row);
    }
    Ok(SessionTable { column_names: full_columns(), rows, labels: sessions.iter().map(|s| s.label).collect() })
}

/// Keeps only the `selected` columns, preserving the matrix's column order.
pub fn post_selection_matrix(matrix: &FeatureMatrix, selected: &[String]) -> Result<FeatureMatrix, FeatureError> {
    let wanted: HashSet<&str> = selected.iter().map(String::as_str).collect();
    for s in &wanted {
        if matrix.column_index(s).is_none() {
            return Err(FeatureError::UnknownColumn(s.to_string()));
        }
    }
    let keep: Vec<usize> = (0..matrix.n_cols()).filter(|&j| wanted.contains(matrix.column_names[j].as_str())).collect();
    Ok(FeatureMatrix {
        column_names: keep.iter().map(|&j| matrix.column_names[j].clone()).collect(),
        rows: matrix.rows.iter().map(|r| keep.iter().map(|&j| r[j]).collect()).collect(),
        labels: matrix.labels.clone(),
        row_ids: matrix.row_ids.clone(),
    })
}

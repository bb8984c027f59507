//! Trained models persisted as versioned JSON documents under `<root>/models`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::error::{Result, ServiceError};
use crate::explain::TrainingStats;
use crate::learners::{EvalReport, ModelSpec, TrainedModel};
use crate::selection::SelectionReport;
use crate::store::{StoreError, TimeWindow};

pub const MODELS_DIR: &str = "models";
pub const REGISTRY_FORMAT_VERSION: u32 = 1;

/// Piece-level (1) or task-level (2) classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Scenario {
    Piece,
    Session,
}

impl TryFrom<u8> for Scenario {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Scenario::Piece),
            2 => Ok(Scenario::Session),
            other => Err(format!("scenario must be 1 or 2, got {other}")),
        }
    }
}

impl From<Scenario> for u8 {
    fn from(s: Scenario) -> u8 {
        match s {
            Scenario::Piece => 1,
            Scenario::Session => 2,
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "1" | "piece" | "pieces" => Ok(Scenario::Piece),
            "2" | "session" | "sessions" | "task" => Ok(Scenario::Session),
            other => Err(format!("unknown scenario {other:?}")),
        }
    }
}

/// Optional time bounds in epoch seconds; missing sides are open.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<f64>,
}

impl WindowSpec {
    pub fn to_window(self) -> std::result::Result<TimeWindow, StoreError> {
        TimeWindow::new(self.from.unwrap_or(f64::NEG_INFINITY), self.to.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRegistryEntry {
    pub model_id: String,
    pub scenario: Scenario,
    pub spec: ModelSpec,
    pub delta: f64,
    pub window: WindowSpec,
    pub feature_names: Vec<String>,
    pub selection: SelectionReport,
    pub eval: EvalReport,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: u32,
    pub entry: ModelRegistryEntry,
    pub training_stats: TrainingStats,
    pub model: TrainedModel,
}

#[derive(Debug)]
pub struct Registry {
    dir: PathBuf,
    docs: BTreeMap<String, ModelDocument>,
}

fn registry_err(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Registry(e.to_string())
}

impl Registry {
    /// Loads every model document in `dir`, creating it when missing.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(registry_err)?;
        let mut docs = BTreeMap::new();
        for entry in fs::read_dir(&dir).map_err(registry_err)? {
            let path = entry.map_err(registry_err)?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(registry_err)?;
            let doc: ModelDocument =
                serde_json::from_str(&text).map_err(|e| registry_err(format!("{}: {e}", path.display())))?;
            if doc.version != REGISTRY_FORMAT_VERSION {
                return Err(registry_err(format!("{}: unsupported version {}", path.display(), doc.version)));
            }
            docs.insert(doc.entry.model_id.clone(), doc);
        }
        Ok(Self { dir, docs })
    }

    pub fn for_store(root: impl AsRef<Path>) -> Result<Self> {
        Self::open(root.as_ref().join(MODELS_DIR))
    }

    fn next_id(&self) -> String {
        let n =
            self.docs.keys().filter_map(|k| k.strip_prefix('m').and_then(|d| d.parse::<u32>().ok())).max().unwrap_or(0);
        format!("m{:04}", n + 1)
    }

    /// Assigns an id, writes the document and returns its entry.
    pub fn register(&mut self, mut doc: ModelDocument) -> Result<ModelRegistryEntry> {
        let id = self.next_id();
        doc.entry.model_id = id.clone();
        doc.version = REGISTRY_FORMAT_VERSION;
        let path = self.dir.join(format!("{id}.json"));
        let tmp = self.dir.join(format!("{id}.json.tmp"));
        fs::write(&tmp, serde_json::to_vec_pretty(&doc).map_err(registry_err)?).map_err(registry_err)?;
        fs::rename(&tmp, &path).map_err(registry_err)?;
        let entry = doc.entry.clone();
        self.docs.insert(id, doc);
        Ok(entry)
    }

    pub fn get(&self, id: &str) -> Result<&ModelDocument> {
        self.docs.get(id).ok_or_else(|| ServiceError::NotFound(format!("model {id}")))
    }

    pub fn entries(&self) -> Vec<&ModelRegistryEntry> {
        self.docs.values().map(|d| &d.entry).collect()
    }

    /// Most recently registered model of `scenario`.
    pub fn latest(&self, scenario: Scenario) -> Option<&ModelDocument> {
        self.docs.values().rev().find(|d| d.entry.scenario == scenario)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

use serde::{Deserialize, Serialize};

use crate::explain::ExplainError;
use crate::features::FeatureError;
use crate::learners::LearnError;
use crate::model::MatrixError;
use crate::selection::SelectionError;
use crate::store::StoreError;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error("{0} not found")]
    NotFound(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("registry failure: {0}")]
    Registry(String),
}

pub type Result<T> = std::result::Result<T, ServiceError>;

impl From<MatrixError> for ServiceError {
    fn from(e: MatrixError) -> Self {
        ServiceError::Feature(FeatureError::Matrix(e))
    }
}

/// Error document returned by the API and printed by the CLI with `--json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub detail: serde_json::Value,
}

impl ServiceError {
    /// Stable machine code, named after the originating error variant.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Store(e) => match e {
                StoreError::MalformedDocument(_) => "MalformedDocument",
                StoreError::SchemaViolation(_) => "SchemaViolation",
                StoreError::DuplicateId(_) => "DuplicateId",
                StoreError::StoreUnavailable(_) => "StoreUnavailable",
                StoreError::InvalidWindow { .. } => "InvalidWindow",
                StoreError::IoFailure(_) => "IoFailure",
                StoreError::Csv(_) => "CsvFailure",
            },
            ServiceError::Feature(e) => match e {
                FeatureError::EmptyVector => "EmptyVector",
                FeatureError::InconsistentSession { .. } => "InconsistentSession",
                FeatureError::UnknownColumn(_) => "UnknownColumn",
                FeatureError::Matrix(_) => "InvalidMatrix",
            },
            ServiceError::Selection(e) => match e {
                SelectionError::InvalidDelta(_) => "InvalidDelta",
                SelectionError::Learn(l) => learn_code(l),
                SelectionError::UnlabeledMatrix => "UnlabeledMatrix",
                SelectionError::TooFewRows => "TooFewRows",
                _ => "SelectionFailure",
            },
            ServiceError::Learn(e) => learn_code(e),
            ServiceError::Explain(e) => match e {
                ExplainError::SingularSystem(_) => "SingularSystem",
                ExplainError::Learn(l) => learn_code(l),
                ExplainError::TooFewSamples(_) => "InvalidParameter",
                _ => "ExplainFailure",
            },
            ServiceError::NotFound(_) => "NotFound",
            ServiceError::InvalidRequest(_) => "InvalidRequest",
            ServiceError::Registry(_) => "RegistryFailure",
        }
    }

    /// Caller mistakes, as opposed to internal failures.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self.code(),
            "StoreUnavailable"
                | "IoFailure"
                | "CsvFailure"
                | "RegistryFailure"
                | "NonConvergence"
                | "SingularSystem"
                | "SelectionFailure"
                | "ExplainFailure"
        )
    }

    pub fn body(&self) -> ErrorBody {
        let detail = match self {
            ServiceError::Store(StoreError::SchemaViolation(v)) => serde_json::json!({ "violations": v }),
            ServiceError::Feature(FeatureError::InconsistentSession { session, violations }) => {
                serde_json::json!({ "session": session, "violations": violations })
            }
            ServiceError::Learn(LearnError::UnknownColumn(c))
            | ServiceError::Feature(FeatureError::UnknownColumn(c)) => {
                serde_json::json!({ "column": c })
            }
            _ => serde_json::Value::Null,
        };
        ErrorBody { code: self.code().to_string(), message: self.to_string(), detail }
    }
}

fn learn_code(e: &LearnError) -> &'static str {
    match e {
        LearnError::EmptyDataset => "EmptyDataset",
        LearnError::NoFeatures => "NoFeatures",
        LearnError::SingleClass(_) => "SingleClass",
        LearnError::DegenerateWeakLearner { .. } => "DegenerateWeakLearner",
        LearnError::NonConvergence { .. } => "NonConvergence",
        LearnError::ClassTooSmall { .. } => "ClassTooSmall",
        LearnError::UntrainedModel => "UntrainedModel",
        LearnError::UnlabeledMatrix => "UnlabeledMatrix",
        LearnError::UnknownColumn(_) => "UnknownColumn",
        LearnError::FeatureCount { .. } => "FeatureCount",
        LearnError::InvalidParameter(_) => "InvalidParameter",
    }
}

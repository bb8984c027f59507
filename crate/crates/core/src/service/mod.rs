//! Model registry, shared pipeline calls and the HTTP interface.

pub mod error;
pub mod http;
pub mod pipeline;
pub mod registry;

pub use error::{ErrorBody, ServiceError};
pub use registry::{ModelDocument, ModelRegistryEntry, Registry, Scenario, WindowSpec};

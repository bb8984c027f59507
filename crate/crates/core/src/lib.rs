//! Explainable worker-performance analytics for industrial workstations.
//!
//! The pipeline ingests piece and task events into an append-only [`store`],
//! turns them into feature matrices ([`features`]), filters features
//! ([`selection`]), trains and cross-validates classifiers ([`learners`]),
//! computes worker KPIs with trigger rules ([`kpi`]) and explains individual
//! predictions in plain language ([`explain`]). [`simulator`] produces
//! synthetic workers for desk-scale experiments and [`service`] wires it all
//! behind a CLI and an HTTP API.

pub mod explain;
pub mod features;
pub mod kpi;
pub mod learners;
pub mod model;
pub mod rng;
pub mod selection;
pub mod service;
pub mod simulator;
pub mod store;

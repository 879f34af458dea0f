//! Knowledge graph for demand forecasts, their feature-relevance explanations,
//! heuristic decision options, and the user feedback collected on all of them.
//!
//! The store ([`graph`]) is an append-only property graph; [`schema`] encodes
//! the ontology and validates every write. The pipeline modules
//! ([`ingestion`], [`explanation`], [`decision`], [`feedback`]) build on both,
//! and [`metrics`] measures the size and interconnectedness of the result.

pub mod decision;
pub mod error;
pub mod explanation;
pub mod feedback;
pub mod graph;
pub mod ingestion;
pub mod metrics;
pub mod query;
pub mod rng;
pub mod schema;
pub mod synthetic;

pub use error::{Error, ErrorCategory, Result};
pub use graph::{Edge, EdgeId, Graph, Node, NodeId, PropertyValue, Props, ValueType};
pub use metrics::GraphMetrics;
pub use rng::SplitMix64;
pub use schema::{builtin_xaikg_schema, SchemaSpec};

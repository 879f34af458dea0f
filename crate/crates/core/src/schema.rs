//! Ontology kinds as an enforceable schema.
//!
//! A [`SchemaSpec`] lists node kinds with their required properties and edge
//! kinds with the endpoint-kind pairs they may connect. Validation is closed
//! world for kinds; properties beyond the required ones are allowed so the
//! graph can be enriched later without a schema change.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Element, Graph, PendingWrites, Props, TypeHints, ValueType};

/// Node kind names used by the builtin schema.
pub mod node {
    pub const USE_CASE: &str = "UseCase";
    pub const AI_MODEL: &str = "AIModel";
    pub const MATERIAL: &str = "Material";
    pub const CLIENT: &str = "Client";
    pub const SHIPMENT: &str = "Shipment";
    pub const FORECAST: &str = "Forecast";
    pub const FEATURE: &str = "Feature";
    pub const FEATURE_RELEVANCE: &str = "FeatureRelevance";
    pub const FORECAST_EXPLANATION: &str = "ForecastExplanation";
    pub const DECISION_OPTION: &str = "DecisionOption";
    pub const FEEDBACK: &str = "Feedback";
    pub const USER: &str = "User";
    pub const ACTION: &str = "Action";
}

/// Edge kind names used by the builtin schema.
pub mod edge {
    pub const SERVES: &str = "SERVES";
    pub const PRODUCED: &str = "PRODUCED";
    pub const FOR_MATERIAL: &str = "FOR_MATERIAL";
    pub const FOR_CLIENT: &str = "FOR_CLIENT";
    pub const HAS_RELEVANCE: &str = "HAS_RELEVANCE";
    pub const OF_FEATURE: &str = "OF_FEATURE";
    pub const EXPLAINED_BY: &str = "EXPLAINED_BY";
    pub const BASED_ON: &str = "BASED_ON";
    pub const SUGGESTS: &str = "SUGGESTS";
    pub const ABOUT: &str = "ABOUT";
    pub const GAVE: &str = "GAVE";
    pub const TOOK: &str = "TOOK";
    pub const SELECTED: &str = "SELECTED";
}

/// The bundled descriptor for the builtin schema.
pub const BUILTIN_DESCRIPTOR: &str = include_str!("../data/xaikg_schema.json");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeKindSpec {
    pub name: String,
    /// Upper-ontology alignment note; informational only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc: Option<String>,
    #[serde(default)]
    pub required_props: BTreeMap<String, ValueType>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeKindSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc: Option<String>,
    #[serde(default)]
    pub endpoints: Vec<(String, String)>,
    #[serde(default)]
    pub required_props: BTreeMap<String, ValueType>,
}

impl EdgeKindSpec {
    pub fn allows(&self, src: &str, dst: &str) -> bool {
        self.endpoints.iter().any(|(s, d)| s == src && d == dst)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaSpec {
    #[serde(default)]
    pub node_kinds: Vec<NodeKindSpec>,
    #[serde(default)]
    pub edge_kinds: Vec<EdgeKindSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("schema descriptor line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("edge kind {edge} references undeclared node kind {kind}")]
    DanglingReference { edge: String, kind: String },
    #[error("kind {0} declared more than once")]
    DuplicateKind(String),
}

/// One reason a node or edge does not fit the schema.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    UnknownNodeKind { kind: String },
    UnknownEdgeKind { kind: String },
    MissingProperty { kind: String, property: String, expected: ValueType },
    MistypedProperty { kind: String, property: String, expected: ValueType, found: ValueType },
    NonFiniteProperty { kind: String, property: String },
    EndpointNotAllowed { kind: String, src: String, dst: String },
}

impl Violation {
    fn sort_key(&self) -> (Option<&str>, &str, u8) {
        match self {
            Violation::UnknownNodeKind { kind } => (None, kind, 0),
            Violation::UnknownEdgeKind { kind } => (None, kind, 1),
            Violation::EndpointNotAllowed { kind, .. } => (None, kind, 2),
            Violation::MissingProperty { kind, property, .. } => (Some(property), kind, 3),
            Violation::MistypedProperty { kind, property, .. } => (Some(property), kind, 4),
            Violation::NonFiniteProperty { kind, property } => (Some(property), kind, 5),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownNodeKind { kind } => write!(f, "unknown node kind {kind}"),
            Violation::UnknownEdgeKind { kind } => write!(f, "unknown edge kind {kind}"),
            Violation::MissingProperty { kind, property, expected } => {
                write!(f, "{kind}: missing {expected} property {property}")
            }
            Violation::MistypedProperty { kind, property, expected, found } => {
                write!(f, "{kind}: property {property} is {found}, expected {expected}")
            }
            Violation::NonFiniteProperty { kind, property } => {
                write!(f, "{kind}: property {property} is not a finite number")
            }
            Violation::EndpointNotAllowed { kind, src, dst } => {
                write!(f, "{kind}: endpoint pair ({src}, {dst}) not allowed")
            }
        }
    }
}

impl SchemaSpec {
    pub fn node_kind(&self, name: &str) -> Option<&NodeKindSpec> {
        self.node_kinds.iter().find(|k| k.name == name)
    }

    pub fn edge_kind(&self, name: &str) -> Option<&EdgeKindSpec> {
        self.edge_kinds.iter().find(|k| k.name == name)
    }

    /// Checks a node against its kind. An empty list means the node is valid.
    pub fn validate_node(&self, kind: &str, props: &Props) -> Vec<Violation> {
        match self.node_kind(kind) {
            None => vec![Violation::UnknownNodeKind { kind: kind.to_string() }],
            Some(spec) => sorted(check_props(kind, &spec.required_props, props)),
        }
    }

    pub fn validate_edge(&self, kind: &str, src_kind: &str, dst_kind: &str, props: &Props) -> Vec<Violation> {
        let Some(spec) = self.edge_kind(kind) else {
            return vec![Violation::UnknownEdgeKind { kind: kind.to_string() }];
        };
        let mut out = check_props(kind, &spec.required_props, props);
        if !spec.allows(src_kind, dst_kind) {
            out.push(Violation::EndpointNotAllowed {
                kind: kind.to_string(),
                src: src_kind.to_string(),
                dst: dst_kind.to_string(),
            });
        }
        sorted(out)
    }

    /// Validates every staged write against this schema.
    pub fn validate_writes(&self, graph: &Graph, writes: &PendingWrites) -> Vec<Violation> {
        let mut out = Vec::new();
        for n in writes.nodes() {
            out.extend(self.validate_node(&n.kind, &n.props));
        }
        for e in writes.edges() {
            // Batch::add_edge already guarantees both endpoints resolve.
            let src = writes.node_kind(graph, e.src).unwrap_or_default();
            let dst = writes.node_kind(graph, e.dst).unwrap_or_default();
            out.extend(self.validate_edge(&e.kind, src, dst, &e.props));
        }
        out
    }

    /// Validates, then commits. Nothing is written if any violation is found.
    pub fn commit_checked(&self, graph: &mut Graph, writes: PendingWrites) -> Result<(usize, usize)> {
        let violations = self.validate_writes(graph, &writes);
        if !violations.is_empty() {
            return Err(Error::Violations(violations));
        }
        Ok(graph.commit(writes)?)
    }
}

impl TypeHints for SchemaSpec {
    fn prop_type(&self, element: Element, kind: &str, prop: &str) -> Option<ValueType> {
        let required = match element {
            Element::Node => &self.node_kind(kind)?.required_props,
            Element::Edge => &self.edge_kind(kind)?.required_props,
        };
        match required.get(prop) {
            Some(t) => Some(*t),
            // Bookkeeping properties the pipeline attaches beyond the ontology.
            None if matches!(prop, "source_id" | "name" | "code") => Some(ValueType::Text),
            None => None,
        }
    }
}

fn check_props(kind: &str, required: &BTreeMap<String, ValueType>, props: &Props) -> Vec<Violation> {
    let mut out = Vec::new();
    for (name, expected) in required {
        match props.get(name) {
            None => out.push(Violation::MissingProperty {
                kind: kind.to_string(),
                property: name.clone(),
                expected: *expected,
            }),
            Some(v) if v.value_type() != *expected => out.push(Violation::MistypedProperty {
                kind: kind.to_string(),
                property: name.clone(),
                expected: *expected,
                found: v.value_type(),
            }),
            Some(_) => {}
        }
    }
    for (name, value) in props {
        if value.as_decimal().is_some_and(|x| !x.is_finite()) {
            out.push(Violation::NonFiniteProperty {
                kind: kind.to_string(),
                property: name.clone(),
            });
        }
    }
    out
}

fn sorted(mut v: Vec<Violation>) -> Vec<Violation> {
    v.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    v
}

/// The ontology used by every pipeline module.
pub fn builtin_xaikg_schema() -> SchemaSpec {
    load_schema(BUILTIN_DESCRIPTOR).expect("bundled descriptor is valid")
}

/// Parses a JSON schema descriptor. Blank input yields an empty schema.
pub fn load_schema(text: &str) -> Result<SchemaSpec, SchemaError> {
    if text.trim().is_empty() {
        return Ok(SchemaSpec::default());
    }
    let spec: SchemaSpec = serde_json::from_str(text).map_err(|e| SchemaError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut seen = std::collections::HashSet::new();
    for name in spec.node_kinds.iter().map(|k| &k.name) {
        if !seen.insert(name.as_str()) {
            return Err(SchemaError::DuplicateKind(name.clone()));
        }
    }
    let mut seen_edges = std::collections::HashSet::new();
    for edge in &spec.edge_kinds {
        if !seen_edges.insert(edge.name.as_str()) {
            return Err(SchemaError::DuplicateKind(edge.name.clone()));
        }
        for (src, dst) in &edge.endpoints {
            for kind in [src, dst] {
                if !seen.contains(kind.as_str()) {
                    return Err(SchemaError::DanglingReference {
                        edge: edge.name.clone(),
                        kind: kind.clone(),
                    });
                }
            }
        }
    }
    Ok(spec)
}

pub fn dump_schema(spec: &SchemaSpec) -> String {
    serde_json::to_string_pretty(spec).expect("schema always serializes")
}

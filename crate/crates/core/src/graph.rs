//! Append-only typed property graph.
//!
//! Nodes and edges carry a kind name and an immutable property map. Ids are
//! handed out in creation order (`n1`, `n2`, ... and `e1`, `e2`, ...) and are
//! never reused. The store knows nothing about ontology kinds; that lives in
//! [`crate::schema`].
//!
//! Writes that must be validated as a whole go through [`Batch`], which stages
//! nodes and edges against a borrowed graph and yields [`PendingWrites`] that
//! can be committed once checked.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

macro_rules! sequence_id {
    ($name:ident, $prefix:literal, $what:literal) => {
        #[doc = concat!("Identifier of a ", $what, ", rendered as `", $prefix, "<seq>`.")]
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(u64);

        impl $name {
            /// Builds an id from its 1-based sequence number.
            pub fn from_seq(seq: u64) -> Option<Self> {
                (seq >= 1).then_some(Self(seq))
            }

            pub fn seq(self) -> u64 {
                self.0
            }

            fn index(self) -> usize {
                (self.0 - 1) as usize
            }

            fn from_index(index: usize) -> Self {
                Self(index as u64 + 1)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }

        impl FromStr for $name {
            type Err = GraphError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let bad = || GraphError::BadId(s.to_string());
                let digits = s.strip_prefix($prefix).ok_or_else(bad)?;
                if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(bad());
                }
                digits.parse().map(Self).map_err(|_| bad())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

sequence_id!(NodeId, "n", "node");
sequence_id!(EdgeId, "e", "edge");

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("unknown endpoint {0}")]
    UnknownEndpoint(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("malformed identifier {0:?}")]
    BadId(String),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: edge {edge} references {endpoint} before it is defined")]
    EdgeBeforeEndpoint {
        line: usize,
        edge: EdgeId,
        endpoint: NodeId,
    },
    #[error("staged writes are stale: graph changed since the batch was opened")]
    StaleBatch,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Declared type of a property value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Text,
    Decimal,
    Integer,
    Boolean,
    Date,
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueType::Text => "text",
            ValueType::Decimal => "decimal",
            ValueType::Integer => "integer",
            ValueType::Boolean => "boolean",
            ValueType::Date => "date",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PropertyValue {
    Text(String),
    Decimal(f64),
    Integer(i64),
    Boolean(bool),
    Date(NaiveDate),
}

impl PropertyValue {
    pub fn value_type(&self) -> ValueType {
        match self {
            PropertyValue::Text(_) => ValueType::Text,
            PropertyValue::Decimal(_) => ValueType::Decimal,
            PropertyValue::Integer(_) => ValueType::Integer,
            PropertyValue::Boolean(_) => ValueType::Boolean,
            PropertyValue::Date(_) => ValueType::Date,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            PropertyValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_decimal(&self) -> Option<f64> {
        match self {
            PropertyValue::Decimal(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_integer(&self) -> Option<i64> {
        match self {
            PropertyValue::Integer(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_date(&self) -> Option<NaiveDate> {
        match self {
            PropertyValue::Date(d) => Some(*d),
            _ => None,
        }
    }

    /// Canonical JSON text of the value as written to snapshots.
    pub fn to_json_text(&self) -> String {
        match self {
            PropertyValue::Text(s) => json_string(s),
            PropertyValue::Decimal(x) => format_decimal(*x),
            PropertyValue::Integer(i) => i.to_string(),
            PropertyValue::Boolean(b) => b.to_string(),
            PropertyValue::Date(d) => format!("\"{}\"", d.format("%Y-%m-%d")),
        }
    }
}

impl From<&str> for PropertyValue {
    fn from(s: &str) -> Self {
        PropertyValue::Text(s.to_string())
    }
}

impl From<String> for PropertyValue {
    fn from(s: String) -> Self {
        PropertyValue::Text(s)
    }
}

impl From<f64> for PropertyValue {
    fn from(x: f64) -> Self {
        PropertyValue::Decimal(x)
    }
}

impl From<i64> for PropertyValue {
    fn from(i: i64) -> Self {
        PropertyValue::Integer(i)
    }
}

impl From<bool> for PropertyValue {
    fn from(b: bool) -> Self {
        PropertyValue::Boolean(b)
    }
}

impl From<NaiveDate> for PropertyValue {
    fn from(d: NaiveDate) -> Self {
        PropertyValue::Date(d)
    }
}

impl Serialize for PropertyValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            PropertyValue::Text(s) => serializer.serialize_str(s),
            PropertyValue::Decimal(x) => serializer.serialize_f64(*x),
            PropertyValue::Integer(i) => serializer.serialize_i64(*i),
            PropertyValue::Boolean(b) => serializer.serialize_bool(*b),
            PropertyValue::Date(d) => serializer.collect_str(&d.format("%Y-%m-%d")),
        }
    }
}

/// Property map; `BTreeMap` keeps keys in ascending order for serialization.
pub type Props = BTreeMap<String, PropertyValue>;

/// Builds a [`Props`] map from `key => value` pairs.
#[macro_export]
macro_rules! props {
    () => { $crate::graph::Props::new() };
    ($($key:expr => $value:expr),+ $(,)?) => {{
        let mut map = $crate::graph::Props::new();
        $( map.insert(String::from($key), $crate::graph::PropertyValue::from($value)); )+
        map
    }};
}

/// Shortest decimal form that round-trips, never in exponent notation, with at
/// least one fractional digit.
pub fn format_decimal(x: f64) -> String {
    let mut s = format!("{x}");
    if !s.contains('.') {
        s.push_str(".0");
    }
    s
}

/// Parses a strict `YYYY-MM-DD` calendar date.
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let b = s.as_bytes();
    let shaped = b.len() == 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b.iter()
            .enumerate()
            .all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit());
    if !shaped {
        return None;
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub kind: String,
    pub props: Props,
}

impl Node {
    pub fn prop(&self, key: &str) -> Option<&PropertyValue> {
        self.props.get(key)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub kind: String,
    pub src: NodeId,
    pub dst: NodeId,
    pub props: Props,
}

/// Which side of the store a property belongs to, for decoding hints.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Element {
    Node,
    Edge,
}

/// Supplies declared property types while importing a snapshot, so that a text
/// value that happens to look like a date stays text.
pub trait TypeHints {
    fn prop_type(&self, element: Element, kind: &str, prop: &str) -> Option<ValueType>;
}

/// No hints: strings shaped like `YYYY-MM-DD` decode as dates.
impl TypeHints for () {
    fn prop_type(&self, _: Element, _: &str, _: &str) -> Option<ValueType> {
        None
    }
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    outgoing: Vec<Vec<EdgeId>>,
    incoming: Vec<Vec<EdgeId>>,
    by_kind: HashMap<String, Vec<NodeId>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn add_node(&mut self, kind: impl Into<String>, props: Props) -> NodeId {
        let id = NodeId::from_index(self.nodes.len());
        let kind = kind.into();
        self.by_kind.entry(kind.clone()).or_default().push(id);
        self.nodes.push(Node { id, kind, props });
        self.outgoing.push(Vec::new());
        self.incoming.push(Vec::new());
        id
    }

    pub fn add_edge(
        &mut self,
        kind: impl Into<String>,
        src: NodeId,
        dst: NodeId,
        props: Props,
    ) -> Result<EdgeId, GraphError> {
        for endpoint in [src, dst] {
            if !self.contains_node(endpoint) {
                return Err(GraphError::UnknownEndpoint(endpoint));
            }
        }
        let id = EdgeId::from_index(self.edges.len());
        self.outgoing[src.index()].push(id);
        self.incoming[dst.index()].push(id);
        self.edges.push(Edge {
            id,
            kind: kind.into(),
            src,
            dst,
            props,
        });
        Ok(id)
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        id.index() < self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.index())
    }

    /// Like [`Graph::node`] but with an unknown-node error.
    pub fn try_node(&self, id: NodeId) -> Result<&Node, GraphError> {
        self.node(id).ok_or(GraphError::UnknownNode(id))
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges.get(id.index())
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Nodes of one kind, in ascending id order.
    pub fn nodes_of_kind(&self, kind: &str) -> &[NodeId] {
        self.by_kind.get(kind).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn outgoing(&self, id: NodeId) -> &[EdgeId] {
        self.outgoing.get(id.index()).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn incoming(&self, id: NodeId) -> &[EdgeId] {
        self.incoming.get(id.index()).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Outgoing edges of `id` with the given kind, in creation order.
    pub fn out_edges<'a>(&'a self, id: NodeId, kind: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.outgoing(id)
            .iter()
            .map(move |e| &self.edges[e.index()])
            .filter(move |e| e.kind == kind)
    }

    /// Incoming edges of `id` with the given kind, in creation order.
    pub fn in_edges<'a>(&'a self, id: NodeId, kind: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.incoming(id)
            .iter()
            .map(move |e| &self.edges[e.index()])
            .filter(move |e| e.kind == kind)
    }

    /// Nodes adjacent to `id` through any edge, ignoring direction.
    pub fn neighbors_undirected(&self, id: NodeId) -> Result<BTreeSet<NodeId>, GraphError> {
        if !self.contains_node(id) {
            return Err(GraphError::UnknownNode(id));
        }
        let mut out = BTreeSet::new();
        for e in &self.outgoing[id.index()] {
            out.insert(self.edges[e.index()].dst);
        }
        for e in &self.incoming[id.index()] {
            out.insert(self.edges[e.index()].src);
        }
        Ok(out)
    }

    /// First node of `kind` whose `prop` equals `value`.
    pub fn find_node(&self, kind: &str, prop: &str, value: &PropertyValue) -> Option<NodeId> {
        self.nodes_of_kind(kind)
            .iter()
            .copied()
            .find(|id| self.nodes[id.index()].props.get(prop) == Some(value))
    }

    /// Applies staged writes. Fails if the graph changed since the batch opened.
    pub fn commit(&mut self, writes: PendingWrites) -> Result<(usize, usize), GraphError> {
        if writes.base_nodes != self.nodes.len() || writes.base_edges != self.edges.len() {
            return Err(GraphError::StaleBatch);
        }
        let counts = (writes.nodes.len(), writes.edges.len());
        for node in writes.nodes {
            self.add_node(node.kind, node.props);
        }
        for edge in writes.edges {
            self.add_edge(edge.kind, edge.src, edge.dst, edge.props)?;
        }
        Ok(counts)
    }

    /// Writes the snapshot: every node in id order, then every edge in id
    /// order, one JSON object per line. Returns the number of lines.
    pub fn export_jsonl<W: Write>(&self, mut sink: W) -> io::Result<usize> {
        for node in &self.nodes {
            writeln!(
                sink,
                "{{\"t\":\"node\",\"id\":\"{}\",\"kind\":{},\"props\":{}}}",
                node.id,
                json_string(&node.kind),
                props_json(&node.props)
            )?;
        }
        for edge in &self.edges {
            writeln!(
                sink,
                "{{\"t\":\"edge\",\"id\":\"{}\",\"kind\":{},\"src\":\"{}\",\"dst\":\"{}\",\"props\":{}}}",
                edge.id,
                json_string(&edge.kind),
                edge.src,
                edge.dst,
                props_json(&edge.props)
            )?;
        }
        sink.flush()?;
        Ok(self.nodes.len() + self.edges.len())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.export_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("snapshot is UTF-8")
    }

    pub fn import_jsonl<R: BufRead>(source: R) -> Result<Graph, GraphError> {
        Self::import_jsonl_with(source, &())
    }

    /// Rebuilds a graph from a snapshot. Ids must appear in sequence; edges may
    /// only reference nodes defined on earlier lines.
    pub fn import_jsonl_with<R: BufRead, H: TypeHints + ?Sized>(
        source: R,
        hints: &H,
    ) -> Result<Graph, GraphError> {
        let mut graph = Graph::new();
        for (i, line) in source.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |message: String| GraphError::Malformed {
                line: line_no,
                message,
            };
            let value: Value = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            let obj = value
                .as_object()
                .ok_or_else(|| malformed("expected a JSON object".into()))?;
            let field = |name: &str| -> Result<&str, GraphError> {
                obj.get(name)
                    .and_then(Value::as_str)
                    .ok_or_else(|| malformed(format!("missing string field {name:?}")))
            };
            let kind = field("kind")?;
            let element = match field("t")? {
                "node" => Element::Node,
                "edge" => Element::Edge,
                other => return Err(malformed(format!("unknown record type {other:?}"))),
            };
            let props = match obj.get("props") {
                Some(Value::Object(map)) => {
                    let mut props = Props::new();
                    for (key, raw) in map {
                        let hint = hints.prop_type(element, kind, key);
                        let value = decode_value(raw, hint)
                            .ok_or_else(|| malformed(format!("unsupported value for property {key:?}")))?;
                        props.insert(key.clone(), value);
                    }
                    props
                }
                _ => return Err(malformed("missing object field \"props\"".into())),
            };
            let id = field("id")?;
            match element {
                Element::Node => {
                    let id: NodeId = id.parse().map_err(|e: GraphError| malformed(e.to_string()))?;
                    if id.index() != graph.nodes.len() {
                        return Err(malformed(format!("node {id} out of sequence")));
                    }
                    graph.add_node(kind, props);
                }
                Element::Edge => {
                    let id: EdgeId = id.parse().map_err(|e: GraphError| malformed(e.to_string()))?;
                    if id.index() != graph.edges.len() {
                        return Err(malformed(format!("edge {id} out of sequence")));
                    }
                    let src: NodeId = field("src")?.parse().map_err(|e: GraphError| malformed(e.to_string()))?;
                    let dst: NodeId = field("dst")?.parse().map_err(|e: GraphError| malformed(e.to_string()))?;
                    for endpoint in [src, dst] {
                        if !graph.contains_node(endpoint) {
                            return Err(GraphError::EdgeBeforeEndpoint {
                                line: line_no,
                                edge: id,
                                endpoint,
                            });
                        }
                    }
                    graph.add_edge(kind, src, dst, props)?;
                }
            }
        }
        Ok(graph)
    }
}

fn props_json(props: &Props) -> String {
    let mut out = String::from("{");
    for (i, (key, value)) in props.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&json_string(key));
        out.push(':');
        out.push_str(&value.to_json_text());
    }
    out.push('}');
    out
}

fn decode_value(raw: &Value, hint: Option<ValueType>) -> Option<PropertyValue> {
    match raw {
        Value::String(s) => match hint {
            Some(ValueType::Text) => Some(PropertyValue::Text(s.clone())),
            _ => Some(match parse_date(s) {
                Some(d) => PropertyValue::Date(d),
                None => PropertyValue::Text(s.clone()),
            }),
        },
        Value::Bool(b) => Some(PropertyValue::Boolean(*b)),
        Value::Number(n) => {
            if hint != Some(ValueType::Decimal) {
                if let Some(i) = n.as_i64() {
                    return Some(PropertyValue::Integer(i));
                }
            }
            n.as_f64().filter(|x| x.is_finite()).map(PropertyValue::Decimal)
        }
        _ => None,
    }
}

/// Staging area for a group of writes that are validated before any of them
/// touches the graph.
pub struct Batch<'g> {
    graph: &'g Graph,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl<'g> Batch<'g> {
    pub fn new(graph: &'g Graph) -> Self {
        Self {
            graph,
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    /// Stages a node; the returned id is the one it will have after commit.
    pub fn add_node(&mut self, kind: impl Into<String>, props: Props) -> NodeId {
        let id = NodeId::from_index(self.graph.node_count() + self.nodes.len());
        self.nodes.push(Node {
            id,
            kind: kind.into(),
            props,
        });
        id
    }

    pub fn add_edge(
        &mut self,
        kind: impl Into<String>,
        src: NodeId,
        dst: NodeId,
        props: Props,
    ) -> Result<EdgeId, GraphError> {
        for endpoint in [src, dst] {
            if self.node_kind(endpoint).is_none() {
                return Err(GraphError::UnknownEndpoint(endpoint));
            }
        }
        let id = EdgeId::from_index(self.graph.edge_count() + self.edges.len());
        self.edges.push(Edge {
            id,
            kind: kind.into(),
            src,
            dst,
            props,
        });
        Ok(id)
    }

    /// Kind of an existing or staged node.
    pub fn node_kind(&self, id: NodeId) -> Option<&str> {
        if let Some(node) = self.graph.node(id) {
            return Some(&node.kind);
        }
        self.nodes
            .get(id.index().checked_sub(self.graph.node_count())?)
            .map(|n| n.kind.as_str())
    }

    pub fn finish(self) -> PendingWrites {
        PendingWrites {
            base_nodes: self.graph.node_count(),
            base_edges: self.graph.edge_count(),
            nodes: self.nodes,
            edges: self.edges,
        }
    }
}

/// Writes staged by a [`Batch`], ready for validation and commit.
#[derive(Debug, Clone)]
pub struct PendingWrites {
    base_nodes: usize,
    base_edges: usize,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl PendingWrites {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.edges.is_empty()
    }

    /// Kind of a node that is either in `graph` or among the staged nodes.
    pub fn node_kind<'a>(&'a self, graph: &'a Graph, id: NodeId) -> Option<&'a str> {
        if let Some(node) = graph.node(id) {
            return Some(&node.kind);
        }
        self.nodes
            .get(id.index().checked_sub(self.base_nodes)?)
            .map(|n| n.kind.as_str())
    }
}

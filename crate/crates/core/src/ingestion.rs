//! Parsing of shipment, forecast and relevance files, and their conversion
//! into graph entities.
//!
//! Every ingest call is all-or-nothing: the whole batch is staged, validated
//! against the schema, and only then committed.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Read};

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::explanation::rank_features;
use crate::graph::{parse_date, Batch, Graph, NodeId, PropertyValue};
use crate::props;
use crate::schema::{edge, node, SchemaSpec};

pub const SHIPMENTS_HEADER: [&str; 4] = ["date", "material_id", "client_id", "quantity"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShipmentRecord {
    #[serde(with = "civil_date")]
    pub date: NaiveDate,
    pub material_id: String,
    pub client_id: String,
    pub quantity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastRecord {
    pub forecast_id: String,
    pub model_id: String,
    pub use_case: String,
    pub material_id: String,
    pub client_id: String,
    #[serde(with = "civil_date")]
    pub target_date: NaiveDate,
    #[serde(with = "civil_date")]
    pub created_at: NaiveDate,
    pub quantity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelevanceRecord {
    pub forecast_id: String,
    pub feature: String,
    pub weight: f64,
}

/// Nodes and edges written by one ingest call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestCounts {
    pub nodes_added: usize,
    pub edges_added: usize,
}

impl IngestCounts {
    fn from_pair((nodes_added, edges_added): (usize, usize)) -> Self {
        Self { nodes_added, edges_added }
    }
}

impl std::ops::Add for IngestCounts {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            nodes_added: self.nodes_added + rhs.nodes_added,
            edges_added: self.edges_added + rhs.edges_added,
        }
    }
}

pub(crate) mod civil_date {
    use super::*;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(d: &NaiveDate, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&d.format("%Y-%m-%d"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDate, D::Error> {
        let s = String::deserialize(d)?;
        parse_date(&s).ok_or_else(|| serde::de::Error::custom(format!("invalid date {s:?}, expected YYYY-MM-DD")))
    }
}

fn check_quantity(q: f64, location: impl FnOnce() -> String) -> Result<()> {
    if !q.is_finite() {
        return Err(Error::parse(location(), "quantity is not a finite number"));
    }
    if q < 0.0 {
        return Err(Error::parse(location(), format!("negative quantity {q}")));
    }
    Ok(())
}

/// Reads the shipments CSV. Row numbers in errors count the header as row 1.
pub fn parse_shipments_csv<R: Read>(source: R) -> Result<Vec<ShipmentRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(source);
    let mut rows = reader.records();
    match rows.next() {
        Some(Ok(header)) if header.iter().eq(SHIPMENTS_HEADER) => {}
        Some(Ok(header)) => {
            return Err(Error::parse(
                "row 1",
                format!("header must be {:?}, found {:?}", SHIPMENTS_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
            ))
        }
        Some(Err(e)) => return Err(Error::parse("row 1", e)),
        None => return Err(Error::parse("row 1", "missing header")),
    }
    let mut out = Vec::new();
    for (i, row) in rows.enumerate() {
        let row_no = i + 2;
        let location = || format!("row {row_no}");
        let row = row.map_err(|e| Error::parse(location(), e))?;
        if row.len() != 4 {
            return Err(Error::parse(location(), format!("expected 4 fields, found {}", row.len())));
        }
        let date = parse_date(&row[0]).ok_or_else(|| Error::parse(location(), format!("invalid date {:?}", &row[0])))?;
        let quantity: f64 = row[3]
            .trim()
            .parse()
            .map_err(|_| Error::parse(location(), format!("invalid quantity {:?}", &row[3])))?;
        check_quantity(quantity, location)?;
        out.push(ShipmentRecord {
            date,
            material_id: row[1].to_string(),
            client_id: row[2].to_string(),
            quantity,
        });
    }
    Ok(out)
}

/// Reads a JSON array of forecast objects.
pub fn parse_forecasts_json<R: Read>(source: R) -> Result<Vec<ForecastRecord>> {
    let raw: Vec<serde_json::Value> =
        serde_json::from_reader(source).map_err(|e| Error::parse("forecasts", e))?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(raw.len());
    for (i, value) in raw.into_iter().enumerate() {
        let location = || format!("element {i}");
        let record: ForecastRecord = serde_json::from_value(value).map_err(|e| Error::parse(location(), e))?;
        check_quantity(record.quantity, location)?;
        if !seen.insert(record.forecast_id.clone()) {
            return Err(Error::DuplicateKey(format!("forecast_id {} ({})", record.forecast_id, location())));
        }
        out.push(record);
    }
    Ok(out)
}

/// Reads relevance JSON Lines. Blank lines are skipped.
pub fn parse_relevance_jsonl<R: BufRead>(source: R) -> Result<Vec<RelevanceRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let location = || format!("line {}", i + 1);
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RelevanceRecord = serde_json::from_str(&line).map_err(|e| Error::parse(location(), e))?;
        if !record.weight.is_finite() {
            return Err(Error::parse(location(), "weight is not a finite number"));
        }
        if !seen.insert((record.forecast_id.clone(), record.feature.clone())) {
            return Err(Error::DuplicateKey(format!(
                "({}, {}) ({})",
                record.forecast_id,
                record.feature,
                location()
            )));
        }
        out.push(record);
    }
    Ok(out)
}

/// Looks up nodes deduplicated by one identifying text property, remembering
/// the ones staged earlier in the same batch.
struct Dedup<'a> {
    kind: &'a str,
    key: &'a str,
    staged: HashMap<String, NodeId>,
}

impl<'a> Dedup<'a> {
    fn new(kind: &'a str, key: &'a str) -> Self {
        Self {
            kind,
            key,
            staged: HashMap::new(),
        }
    }

    fn get_or_add(&mut self, batch: &mut Batch<'_>, value: &str) -> NodeId {
        if let Some(id) = self.staged.get(value) {
            return *id;
        }
        let id = batch
            .graph()
            .find_node(self.kind, self.key, &PropertyValue::Text(value.to_string()))
            .unwrap_or_else(|| batch.add_node(self.kind, props! {self.key => value}));
        self.staged.insert(value.to_string(), id);
        id
    }
}

pub fn ingest_shipments(graph: &mut Graph, schema: &SchemaSpec, records: &[ShipmentRecord]) -> Result<IngestCounts> {
    let mut batch = Batch::new(graph);
    let mut materials = Dedup::new(node::MATERIAL, "code");
    let mut clients = Dedup::new(node::CLIENT, "code");
    for r in records {
        let material = materials.get_or_add(&mut batch, &r.material_id);
        let client = clients.get_or_add(&mut batch, &r.client_id);
        let shipment = batch.add_node(node::SHIPMENT, props! {"date" => r.date, "quantity" => r.quantity});
        batch.add_edge(edge::FOR_MATERIAL, shipment, material, props! {})?;
        batch.add_edge(edge::FOR_CLIENT, shipment, client, props! {})?;
    }
    let writes = batch.finish();
    Ok(IngestCounts::from_pair(schema.commit_checked(graph, writes)?))
}

/// Forecast nodes keyed by their external `source_id`.
pub fn forecast_index(graph: &Graph) -> HashMap<String, NodeId> {
    graph
        .nodes_of_kind(node::FORECAST)
        .iter()
        .filter_map(|id| {
            let source = graph.node(*id)?.prop("source_id")?.as_text()?;
            Some((source.to_string(), *id))
        })
        .collect()
}

pub fn ingest_forecasts(graph: &mut Graph, schema: &SchemaSpec, records: &[ForecastRecord]) -> Result<IngestCounts> {
    let known = forecast_index(graph);
    let mut in_batch = HashSet::new();
    for r in records {
        if known.contains_key(&r.forecast_id) || !in_batch.insert(r.forecast_id.as_str()) {
            return Err(Error::DuplicateKey(format!("forecast_id {}", r.forecast_id)));
        }
        check_quantity(r.quantity, || format!("forecast {}", r.forecast_id))?;
    }

    let mut served: HashSet<(NodeId, NodeId)> = graph
        .edges()
        .iter()
        .filter(|e| e.kind == edge::SERVES)
        .map(|e| (e.src, e.dst))
        .collect();
    let mut batch = Batch::new(graph);
    let mut use_cases = Dedup::new(node::USE_CASE, "name");
    let mut models = Dedup::new(node::AI_MODEL, "name");
    let mut materials = Dedup::new(node::MATERIAL, "code");
    let mut clients = Dedup::new(node::CLIENT, "code");
    for r in records {
        let use_case = use_cases.get_or_add(&mut batch, &r.use_case);
        let model = models.get_or_add(&mut batch, &r.model_id);
        let material = materials.get_or_add(&mut batch, &r.material_id);
        let client = clients.get_or_add(&mut batch, &r.client_id);
        let forecast = batch.add_node(
            node::FORECAST,
            props! {
                "source_id" => r.forecast_id.as_str(),
                "target_date" => r.target_date,
                "created_at" => r.created_at,
                "quantity" => r.quantity,
            },
        );
        if served.insert((model, use_case)) {
            batch.add_edge(edge::SERVES, model, use_case, props! {})?;
        }
        batch.add_edge(edge::PRODUCED, model, forecast, props! {})?;
        batch.add_edge(edge::FOR_MATERIAL, forecast, material, props! {})?;
        batch.add_edge(edge::FOR_CLIENT, forecast, client, props! {})?;
    }
    let writes = batch.finish();
    Ok(IngestCounts::from_pair(schema.commit_checked(graph, writes)?))
}

/// Attaches relevance records to their forecasts, ranking each forecast's
/// features by |weight| descending with ties broken by name.
pub fn ingest_relevance(graph: &mut Graph, schema: &SchemaSpec, records: &[RelevanceRecord]) -> Result<IngestCounts> {
    let index = forecast_index(graph);
    let mut per_forecast: BTreeMap<&str, Vec<(&str, f64)>> = BTreeMap::new();
    for r in records {
        let forecast = index
            .get(&r.forecast_id)
            .ok_or_else(|| Error::UnknownId(format!("forecast {}", r.forecast_id)))?;
        if graph.out_edges(*forecast, edge::HAS_RELEVANCE).next().is_some() {
            return Err(Error::Conflict(format!("forecast {} already has feature relevances", r.forecast_id)));
        }
        per_forecast.entry(&r.forecast_id).or_default().push((&r.feature, r.weight));
    }
    let mut ranks: HashMap<(&str, String), u32> = HashMap::new();
    for (forecast, weights) in &per_forecast {
        for ranked in rank_features(weights)? {
            ranks.insert((forecast, ranked.name), ranked.rank);
        }
    }

    let mut batch = Batch::new(graph);
    let mut features = Dedup::new(node::FEATURE, "name");
    for r in records {
        let forecast = index[&r.forecast_id];
        let feature = features.get_or_add(&mut batch, &r.feature);
        let rank = ranks[&(r.forecast_id.as_str(), r.feature.clone())];
        let relevance = batch.add_node(
            node::FEATURE_RELEVANCE,
            props! {"weight" => r.weight, "rank" => i64::from(rank)},
        );
        batch.add_edge(edge::HAS_RELEVANCE, forecast, relevance, props! {})?;
        batch.add_edge(edge::OF_FEATURE, relevance, feature, props! {})?;
    }
    let writes = batch.finish();
    Ok(IngestCounts::from_pair(schema.commit_checked(graph, writes)?))
}

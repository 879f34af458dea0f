//! Heuristic decision-making options.
//!
//! A forecast is compared with the trailing mean of shipped quantity for the
//! same material and client. The relative deviation selects exactly one guard,
//! and that guard's ordered action list becomes ranked DecisionOption nodes.

use std::fmt;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explanation::forecast_node;
use crate::graph::{Batch, Graph, NodeId};
use crate::props;
use crate::schema::{edge, node, SchemaSpec};

pub const DEFAULT_RULES: &str = include_str!("../data/default_rules.json");

/// Trailing mean of daily shipped quantity; days without shipments count as zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Baseline {
    pub value: f64,
    pub window_days: u32,
    pub covered_records: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Guard {
    NewDemand,
    Surge,
    Drop,
    Steady,
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Guard::NewDemand => "NEW_DEMAND",
            Guard::Surge => "SURGE",
            Guard::Drop => "DROP",
            Guard::Steady => "STEADY",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleActions {
    #[serde(rename = "SURGE")]
    pub surge: Vec<String>,
    #[serde(rename = "DROP")]
    pub drop: Vec<String>,
    #[serde(rename = "NEW_DEMAND")]
    pub new_demand: Vec<String>,
    #[serde(rename = "STEADY")]
    pub steady: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RulesConfig {
    pub window_days: u32,
    pub upper: f64,
    pub lower: f64,
    pub actions: RuleActions,
}

impl Default for RulesConfig {
    fn default() -> Self {
        Self::from_json(DEFAULT_RULES).expect("bundled rules are valid")
    }
}

impl RulesConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RulesConfig = serde_json::from_str(text).map_err(|e| Error::parse("rules", e))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_days < 1 {
            return Err(Error::InvalidArgument("window_days must be at least 1".into()));
        }
        if !(self.upper > 0.0 && self.lower < 0.0 && self.upper.is_finite() && self.lower.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "thresholds must satisfy upper > 0 > lower, got upper {} lower {}",
                self.upper, self.lower
            )));
        }
        for guard in [Guard::Surge, Guard::Drop, Guard::NewDemand, Guard::Steady] {
            if self.actions_for(guard).is_empty() {
                return Err(Error::InvalidArgument(format!("no actions configured for {guard}")));
            }
        }
        Ok(())
    }

    pub fn actions_for(&self, guard: Guard) -> &[String] {
        match guard {
            Guard::Surge => &self.actions.surge,
            Guard::Drop => &self.actions.drop,
            Guard::NewDemand => &self.actions.new_demand,
            Guard::Steady => &self.actions.steady,
        }
    }

    /// The single guard that fires, with the deviation when it is defined.
    pub fn classify(&self, baseline: f64, forecast: f64) -> (Guard, Option<f64>) {
        classify(baseline, forecast, self.upper, self.lower)
    }
}

pub fn classify(baseline: f64, forecast: f64, upper: f64, lower: f64) -> (Guard, Option<f64>) {
    if baseline == 0.0 {
        let guard = if forecast > 0.0 { Guard::NewDemand } else { Guard::Steady };
        return (guard, None);
    }
    let deviation = (forecast - baseline) / baseline;
    let guard = if deviation >= upper {
        Guard::Surge
    } else if deviation <= lower {
        Guard::Drop
    } else {
        Guard::Steady
    };
    (guard, Some(deviation))
}

fn expect_kind(graph: &Graph, id: NodeId, kind: &str) -> Result<()> {
    match graph.node(id) {
        Some(n) if n.kind == kind => Ok(()),
        Some(n) => Err(Error::InvalidArgument(format!("{id} is a {}, not a {kind}", n.kind))),
        None => Err(Error::UnknownId(id.to_string())),
    }
}

pub fn compute_baseline(
    graph: &Graph,
    material: NodeId,
    client: NodeId,
    target_date: NaiveDate,
    window_days: u32,
) -> Result<Baseline> {
    expect_kind(graph, material, node::MATERIAL)?;
    expect_kind(graph, client, node::CLIENT)?;
    if window_days < 1 {
        return Err(Error::InvalidArgument("window_days must be at least 1".into()));
    }
    let first = target_date - Duration::days(i64::from(window_days));
    let last = target_date - Duration::days(1);
    let mut sum = 0.0;
    let mut covered = 0;
    for e in graph.in_edges(material, edge::FOR_MATERIAL) {
        let Some(shipment) = graph.node(e.src).filter(|n| n.kind == node::SHIPMENT) else {
            continue;
        };
        if !graph.out_edges(shipment.id, edge::FOR_CLIENT).any(|c| c.dst == client) {
            continue;
        }
        let date = shipment.prop("date").and_then(|v| v.as_date());
        let quantity = shipment.prop("quantity").and_then(|v| v.as_decimal());
        if let (Some(date), Some(quantity)) = (date, quantity) {
            if (first..=last).contains(&date) {
                sum += quantity;
                covered += 1;
            }
        }
    }
    Ok(Baseline {
        value: sum / f64::from(window_days),
        window_days,
        covered_records: covered,
    })
}

pub fn has_options(graph: &Graph, forecast: NodeId) -> bool {
    graph.out_edges(forecast, edge::SUGGESTS).next().is_some()
}

fn linked(graph: &Graph, from: NodeId, edge_kind: &str) -> Result<NodeId> {
    graph
        .out_edges(from, edge_kind)
        .next()
        .map(|e| e.dst)
        .ok_or_else(|| Error::InvalidArgument(format!("forecast {from} has no {edge_kind} edge")))
}

/// Creates ranked DecisionOption nodes for one forecast.
pub fn generate_options(graph: &mut Graph, schema: &SchemaSpec, forecast: NodeId, rules: &RulesConfig) -> Result<Vec<NodeId>> {
    rules.validate()?;
    let f = forecast_node(graph, forecast)?;
    if has_options(graph, forecast) {
        return Err(Error::Conflict(format!("forecast {forecast} already has decision options")));
    }
    let quantity = f.prop("quantity").and_then(|v| v.as_decimal());
    let target_date = f.prop("target_date").and_then(|v| v.as_date());
    let (Some(quantity), Some(target_date)) = (quantity, target_date) else {
        return Err(Error::InvalidArgument(format!("forecast {forecast} lacks quantity or target_date")));
    };
    let material = linked(graph, forecast, edge::FOR_MATERIAL)?;
    let client = linked(graph, forecast, edge::FOR_CLIENT)?;
    let baseline = compute_baseline(graph, material, client, target_date, rules.window_days)?;
    let (guard, deviation) = rules.classify(baseline.value, quantity);

    let mut batch = Batch::new(graph);
    let mut created = Vec::new();
    for (action, rank) in rules.actions_for(guard).iter().zip(1i64..) {
        let option = batch.add_node(
            node::DECISION_OPTION,
            props! {"action" => action.as_str(), "rank" => rank, "deviation" => deviation.unwrap_or(0.0)},
        );
        batch.add_edge(edge::SUGGESTS, forecast, option, props! {})?;
        created.push(option);
    }
    let writes = batch.finish();
    schema.commit_checked(graph, writes)?;
    Ok(created)
}

/// Generates options for every forecast that has none yet, in ascending id
/// order. Returns the number of option nodes created.
pub fn options_all(graph: &mut Graph, schema: &SchemaSpec, rules: &RulesConfig) -> Result<usize> {
    rules.validate()?;
    let pending: Vec<NodeId> = graph
        .nodes_of_kind(node::FORECAST)
        .iter()
        .copied()
        .filter(|f| !has_options(graph, *f))
        .collect();
    let mut created = 0;
    for f in pending {
        created += generate_options(graph, schema, f, rules)?.len();
    }
    Ok(created)
}

//! Forecast explanations built from ranked feature relevances.

use std::cmp::Ordering;
use std::collections::HashSet;

use chrono::NaiveDate;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Batch, Graph, Node, NodeId};
use crate::props;
use crate::schema::{edge, node, SchemaSpec};

/// Default number of features named in an explanation.
pub const DEFAULT_TOP_K: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedFeature {
    pub name: String,
    pub weight: f64,
    pub rank: u32,
}

/// Orders by |weight| descending, then name ascending; `total_cmp` keeps the
/// order total even for signed zeros.
fn influence_order(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(b.0))
}

pub fn rank_features<S: AsRef<str>>(relevances: &[(S, f64)]) -> Result<Vec<RankedFeature>> {
    let mut seen = HashSet::new();
    for (name, weight) in relevances {
        if !seen.insert(name.as_ref()) {
            return Err(Error::DuplicateKey(format!("feature {}", name.as_ref())));
        }
        if !weight.is_finite() {
            return Err(Error::InvalidArgument(format!("weight of {} is not finite", name.as_ref())));
        }
    }
    let mut sorted: Vec<(&str, f64)> = relevances.iter().map(|(n, w)| (n.as_ref(), *w)).collect();
    sorted.sort_by(|a, b| influence_order(*a, *b));
    Ok(sorted
        .into_iter()
        .zip(1..)
        .map(|((name, weight), rank)| RankedFeature {
            name: name.to_string(),
            weight,
            rank,
        })
        .collect())
}

/// `+0.500` / `-0.700`: explicit sign, three decimals, halves rounded away
/// from zero.
pub fn format_weight(weight: f64) -> String {
    let sign = if weight >= 0.0 { '+' } else { '-' };
    let milli = (weight.abs() * 1000.0).round() as u64;
    format!("{sign}{}.{:03}", milli / 1000, milli % 1000)
}

pub fn render_text(quantity: f64, target_date: NaiveDate, material: &str, client: &str, top: &[RankedFeature]) -> String {
    let influences = if top.is_empty() {
        "none".to_string()
    } else {
        top.iter()
            .map(|f| {
                let direction = if f.weight >= 0.0 { "higher" } else { "lower" };
                format!("{} ({}, supporting {direction} demand)", f.name, format_weight(f.weight))
            })
            .collect::<Vec<_>>()
            .join("; ")
    };
    format!(
        "Forecast for material {material}, client {client} on {}: {quantity} units. Top influences: {influences}.",
        target_date.format("%Y-%m-%d")
    )
}

/// A FeatureRelevance node resolved with its feature name.
#[derive(Clone, Debug)]
pub(crate) struct ResolvedRelevance {
    pub node: NodeId,
    pub feature: RankedFeature,
}

pub(crate) fn forecast_node(graph: &Graph, id: NodeId) -> Result<&Node> {
    match graph.node(id) {
        Some(n) if n.kind == node::FORECAST => Ok(n),
        Some(n) => Err(Error::UnknownId(format!("{id} (a {}, not a Forecast)", n.kind))),
        None => Err(Error::UnknownId(id.to_string())),
    }
}

/// Code of the node reached through the first `edge_kind` edge out of `from`.
pub(crate) fn linked_code(graph: &Graph, from: NodeId, edge_kind: &str) -> Option<String> {
    graph
        .out_edges(from, edge_kind)
        .next()
        .and_then(|e| graph.node(e.dst))
        .and_then(|n| n.prop("code"))
        .and_then(|v| v.as_text())
        .map(str::to_string)
}

/// Relevances attached to a forecast, ordered by their stored rank.
pub(crate) fn ranked_relevances(graph: &Graph, forecast: NodeId) -> Vec<ResolvedRelevance> {
    let mut out: Vec<ResolvedRelevance> = graph
        .out_edges(forecast, edge::HAS_RELEVANCE)
        .filter_map(|e| {
            let rel = graph.node(e.dst)?;
            let name = linked_name(graph, rel.id)?;
            Some(ResolvedRelevance {
                node: rel.id,
                feature: RankedFeature {
                    name,
                    weight: rel.prop("weight")?.as_decimal()?,
                    rank: u32::try_from(rel.prop("rank")?.as_integer()?).ok()?,
                },
            })
        })
        .collect();
    out.sort_by_key(|r| (r.feature.rank, r.node));
    out
}

fn linked_name(graph: &Graph, relevance: NodeId) -> Option<String> {
    graph
        .out_edges(relevance, edge::OF_FEATURE)
        .next()
        .and_then(|e| graph.node(e.dst))
        .and_then(|n| n.prop("name"))
        .and_then(|v| v.as_text())
        .map(str::to_string)
}

pub fn is_explained(graph: &Graph, forecast: NodeId) -> bool {
    graph.out_edges(forecast, edge::EXPLAINED_BY).next().is_some()
}

/// Creates the ForecastExplanation for one forecast, linked to its top `k`
/// relevances.
pub fn generate_explanation(graph: &mut Graph, schema: &SchemaSpec, forecast: NodeId, k: usize) -> Result<NodeId> {
    if k < 1 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let f = forecast_node(graph, forecast)?;
    if is_explained(graph, forecast) {
        return Err(Error::Conflict(format!("forecast {forecast} is already explained")));
    }
    let quantity = f.prop("quantity").and_then(|v| v.as_decimal());
    let target_date = f.prop("target_date").and_then(|v| v.as_date());
    let (Some(quantity), Some(target_date)) = (quantity, target_date) else {
        return Err(Error::InvalidArgument(format!("forecast {forecast} lacks quantity or target_date")));
    };
    let material = linked_code(graph, forecast, edge::FOR_MATERIAL).unwrap_or_default();
    let client = linked_code(graph, forecast, edge::FOR_CLIENT).unwrap_or_default();

    let top: Vec<ResolvedRelevance> = ranked_relevances(graph, forecast).into_iter().take(k).collect();
    let features: Vec<RankedFeature> = top.iter().map(|r| r.feature.clone()).collect();
    let text = render_text(quantity, target_date, &material, &client, &features);

    let mut batch = Batch::new(graph);
    let explanation = batch.add_node(
        node::FORECAST_EXPLANATION,
        props! {"k" => k as i64, "text" => text},
    );
    batch.add_edge(edge::EXPLAINED_BY, forecast, explanation, props! {})?;
    for r in &top {
        batch.add_edge(edge::BASED_ON, explanation, r.node, props! {})?;
    }
    let writes = batch.finish();
    schema.commit_checked(graph, writes)?;
    Ok(explanation)
}

/// Explains every forecast that has no explanation yet, in ascending id order.
pub fn explain_all(graph: &mut Graph, schema: &SchemaSpec, k: usize) -> Result<usize> {
    if k < 1 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let pending: Vec<NodeId> = graph
        .nodes_of_kind(node::FORECAST)
        .iter()
        .copied()
        .filter(|f| !is_explained(graph, *f))
        .collect();
    for f in &pending {
        generate_explanation(graph, schema, *f, k)?;
    }
    Ok(pending.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse_date;
    use crate::schema::builtin_xaikg_schema;

    fn names(r: &[RankedFeature]) -> Vec<(&str, u32)> {
        r.iter().map(|f| (f.name.as_str(), f.rank)).collect()
    }

    #[test]
    fn ranking_rules() {
        let r = rank_features(&[("price", 0.5), ("promo", -0.7), ("dow", 0.1)]).unwrap();
        assert_eq!(names(&r), [("promo", 1), ("price", 2), ("dow", 3)]);
        assert!(rank_features::<&str>(&[]).unwrap().is_empty());
        let tie = rank_features(&[("b", -0.3), ("a", 0.3)]).unwrap();
        assert_eq!(names(&tie), [("a", 1), ("b", 2)]);
        assert!(matches!(
            rank_features(&[("a", 0.1), ("a", 0.2)]),
            Err(Error::DuplicateKey(_))
        ));
    }

    #[test]
    fn weight_format() {
        assert_eq!(format_weight(0.5), "+0.500");
        assert_eq!(format_weight(-0.7), "-0.700");
        assert_eq!(format_weight(0.0), "+0.000");
        assert_eq!(format_weight(0.0625), "+0.063");
        assert_eq!(format_weight(-0.0625), "-0.063");
        assert_eq!(format_weight(12.3456), "+12.346");
    }

    #[test]
    fn template() {
        let date = parse_date("2020-02-01").unwrap();
        let top = rank_features(&[("price", 0.5), ("promo", -0.7)]).unwrap();
        assert_eq!(
            render_text(15.0, date, "M1", "C1", &top),
            "Forecast for material M1, client C1 on 2020-02-01: 15 units. Top influences: \
             promo (-0.700, supporting lower demand); price (+0.500, supporting higher demand)."
        );
        assert_eq!(
            render_text(2.5, date, "M1", "C1", &[]),
            "Forecast for material M1, client C1 on 2020-02-01: 2.5 units. Top influences: none."
        );
        let zero = rank_features(&[("x", 0.0)]).unwrap();
        assert!(render_text(1.0, date, "M", "C", &zero).contains("x (+0.000, supporting higher demand)"));
    }

    fn forecast_with(weights: &[(&str, f64)]) -> (Graph, NodeId) {
        let mut g = Graph::new();
        let m = g.add_node(node::MATERIAL, props! {"code" => "M1"});
        let c = g.add_node(node::CLIENT, props! {"code" => "C1"});
        let date = parse_date("2020-02-01").unwrap();
        let f = g.add_node(
            node::FORECAST,
            props! {"quantity" => 15.0, "target_date" => date, "created_at" => date},
        );
        g.add_edge(edge::FOR_MATERIAL, f, m, props! {}).unwrap();
        g.add_edge(edge::FOR_CLIENT, f, c, props! {}).unwrap();
        for r in rank_features(weights).unwrap() {
            let feat = g.add_node(node::FEATURE, props! {"name" => r.name.as_str()});
            let rel = g.add_node(
                node::FEATURE_RELEVANCE,
                props! {"weight" => r.weight, "rank" => r.rank as i64},
            );
            g.add_edge(edge::HAS_RELEVANCE, f, rel, props! {}).unwrap();
            g.add_edge(edge::OF_FEATURE, rel, feat, props! {}).unwrap();
        }
        (g, f)
    }

    #[test]
    fn explanation_links_top_k() {
        let s = builtin_xaikg_schema();
        let (mut g, f) = forecast_with(&[("price", 0.5), ("promo", -0.7), ("dow", 0.1)]);
        let x = generate_explanation(&mut g, &s, f, 2).unwrap();
        let ranks: Vec<i64> = g
            .out_edges(x, edge::BASED_ON)
            .map(|e| g.node(e.dst).unwrap().prop("rank").unwrap().as_integer().unwrap())
            .collect();
        assert_eq!(ranks, [1, 2]);
        let text = g.node(x).unwrap().prop("text").unwrap().as_text().unwrap().to_string();
        assert!(text.ends_with("promo (-0.700, supporting lower demand); price (+0.500, supporting higher demand)."));
        assert!(matches!(generate_explanation(&mut g, &s, f, 2), Err(Error::Conflict(_))));
    }

    #[test]
    fn explanation_edge_cases() {
        let s = builtin_xaikg_schema();
        let (mut g, f) = forecast_with(&[("price", 0.5)]);
        let x = generate_explanation(&mut g, &s, f, 5).unwrap();
        assert_eq!(g.out_edges(x, edge::BASED_ON).count(), 1);

        let (mut g, f) = forecast_with(&[]);
        assert!(matches!(generate_explanation(&mut g, &s, f, 0), Err(Error::InvalidArgument(_))));
        let before = g.node_count();
        assert!(matches!(
            generate_explanation(&mut g, &s, NodeId::from_seq(99).unwrap(), 1),
            Err(Error::UnknownId(_))
        ));
        let x = generate_explanation(&mut g, &s, f, 1).unwrap();
        assert_eq!(g.node_count(), before + 1);
        assert!(g.node(x).unwrap().prop("text").unwrap().as_text().unwrap().ends_with("none."));
    }
}

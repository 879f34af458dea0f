//! Read-side views over forecasts, shared by the HTTP API and the CLI.

use chrono::NaiveDate;
use serde::Serialize;

use crate::error::Result;
use crate::explanation::{forecast_node, linked_code, ranked_relevances, RankedFeature};
use crate::feedback::{summarize_feedback, FeedbackSummary};
use crate::graph::{Graph, Node, NodeId};
use crate::schema::{edge, node};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ForecastFilter {
    pub material: Option<String>,
    pub client: Option<String>,
    /// Inclusive bounds on `target_date`.
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    pub offset: usize,
    pub limit: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ForecastListItem {
    pub forecast_id: String,
    pub node_id: NodeId,
    pub target_date: NaiveDate,
    pub quantity: f64,
    pub material: String,
    pub client: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExplanationView {
    pub node_id: NodeId,
    pub k: i64,
    pub text: String,
    /// Features the explanation is based on, in rank order.
    pub features: Vec<RankedFeature>,
    pub feedback: FeedbackSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptionView {
    pub node_id: NodeId,
    pub action: String,
    pub rank: i64,
    pub deviation: f64,
    pub feedback: FeedbackSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ForecastDetail {
    pub node_id: NodeId,
    pub forecast_id: String,
    pub target_date: NaiveDate,
    pub created_at: NaiveDate,
    pub quantity: f64,
    pub material: String,
    pub client: String,
    pub model: Option<String>,
    pub explanation: Option<ExplanationView>,
    pub options: Vec<OptionView>,
    pub feedback: FeedbackSummary,
}

fn text(n: &Node, key: &str) -> String {
    n.prop(key).and_then(|v| v.as_text()).unwrap_or_default().to_string()
}

fn list_item(graph: &Graph, f: &Node) -> Option<ForecastListItem> {
    Some(ForecastListItem {
        forecast_id: text(f, "source_id"),
        node_id: f.id,
        target_date: f.prop("target_date")?.as_date()?,
        quantity: f.prop("quantity")?.as_decimal()?,
        material: linked_code(graph, f.id, edge::FOR_MATERIAL).unwrap_or_default(),
        client: linked_code(graph, f.id, edge::FOR_CLIENT).unwrap_or_default(),
    })
}

/// Forecasts in ascending node-id order matching every given filter.
pub fn list_forecasts(graph: &Graph, filter: &ForecastFilter) -> Vec<ForecastListItem> {
    graph
        .nodes_of_kind(node::FORECAST)
        .iter()
        .filter_map(|id| list_item(graph, graph.node(*id)?))
        .filter(|item| {
            filter.material.as_ref().is_none_or(|m| *m == item.material)
                && filter.client.as_ref().is_none_or(|c| *c == item.client)
                && filter.from.is_none_or(|d| item.target_date >= d)
                && filter.to.is_none_or(|d| item.target_date <= d)
        })
        .skip(filter.offset)
        .take(filter.limit.unwrap_or(usize::MAX))
        .collect()
}

pub fn forecast_detail(graph: &Graph, id: NodeId) -> Result<ForecastDetail> {
    let f = forecast_node(graph, id)?;
    let item = list_item(graph, f).unwrap_or_else(|| ForecastListItem {
        forecast_id: text(f, "source_id"),
        node_id: id,
        target_date: NaiveDate::MIN,
        quantity: 0.0,
        material: String::new(),
        client: String::new(),
    });
    let model = graph
        .in_edges(id, edge::PRODUCED)
        .next()
        .and_then(|e| graph.node(e.src))
        .map(|m| text(m, "name"));

    let explanation = match graph.out_edges(id, edge::EXPLAINED_BY).next() {
        Some(e) => {
            let x = graph.try_node(e.dst)?;
            let based_on: Vec<NodeId> = graph.out_edges(x.id, edge::BASED_ON).map(|b| b.dst).collect();
            let features = ranked_relevances(graph, id)
                .into_iter()
                .filter(|r| based_on.contains(&r.node))
                .map(|r| r.feature)
                .collect();
            Some(ExplanationView {
                node_id: x.id,
                k: x.prop("k").and_then(|v| v.as_integer()).unwrap_or_default(),
                text: text(x, "text"),
                features,
                feedback: summarize_feedback(graph, x.id)?,
            })
        }
        None => None,
    };

    let mut options = Vec::new();
    for e in graph.out_edges(id, edge::SUGGESTS) {
        let o = graph.try_node(e.dst)?;
        options.push(OptionView {
            node_id: o.id,
            action: text(o, "action"),
            rank: o.prop("rank").and_then(|v| v.as_integer()).unwrap_or_default(),
            deviation: o.prop("deviation").and_then(|v| v.as_decimal()).unwrap_or_default(),
            feedback: summarize_feedback(graph, o.id)?,
        });
    }
    options.sort_by_key(|o| (o.rank, o.node_id));

    Ok(ForecastDetail {
        node_id: id,
        forecast_id: item.forecast_id,
        target_date: item.target_date,
        created_at: f.prop("created_at").and_then(|v| v.as_date()).unwrap_or(NaiveDate::MIN),
        quantity: item.quantity,
        material: item.material,
        client: item.client,
        model,
        explanation,
        options,
        feedback: summarize_feedback(graph, id)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback::{ensure_user, record_feedback};
    use crate::graph::parse_date;
    use crate::schema::builtin_xaikg_schema;
    use crate::synthetic::{demo_dataset, run_demo_pipeline};

    #[test]
    fn filters_and_detail() {
        let s = builtin_xaikg_schema();
        let mut g = Graph::new();
        run_demo_pipeline(&mut g, &s, &demo_dataset()).unwrap();

        let all = list_forecasts(&g, &ForecastFilter::default());
        assert_eq!(all.len(), 6);
        let m1 = list_forecasts(
            &g,
            &ForecastFilter {
                material: Some("M1".into()),
                ..Default::default()
            },
        );
        assert_eq!(m1.len(), 2);
        assert!(m1.iter().all(|f| f.material == "M1"));
        let paged = list_forecasts(
            &g,
            &ForecastFilter {
                offset: 1,
                limit: Some(2),
                ..Default::default()
            },
        );
        assert_eq!(paged, all[1..3]);
        let none = list_forecasts(
            &g,
            &ForecastFilter {
                to: parse_date("2019-12-31"),
                ..Default::default()
            },
        );
        assert!(none.is_empty());

        let id = all[0].node_id;
        let user = ensure_user(&mut g, &s, "ana").unwrap();
        record_feedback(&mut g, &s, user, id, 5, "", parse_date("2020-02-01").unwrap()).unwrap();
        let detail = forecast_detail(&g, id).unwrap();
        assert_eq!(detail.feedback.count, 1);
        let x = detail.explanation.unwrap();
        assert_eq!(x.features.iter().map(|f| f.rank).collect::<Vec<_>>(), [1, 2, 3]);
        assert!(x.text.starts_with("Forecast for material M1, client C1"));
        assert!(!detail.options.is_empty());
        assert!(forecast_detail(&g, user).is_err());
    }
}

//! User feedback and actions, their aggregation, and seeded synthetic feedback.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Batch, Graph, NodeId, PropertyValue};
use crate::props;
use crate::rng::SplitMix64;
use crate::schema::{edge, node, SchemaSpec};

pub const ACTION_KINDS: [&str; 3] = ["accepted", "rejected", "modified"];

/// Date stamped on synthetic feedback.
pub const SYNTHETIC_DATE: NaiveDate = match NaiveDate::from_ymd_opt(1970, 1, 1) {
    Some(d) => d,
    None => panic!("valid date"),
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeedbackSummary {
    pub target: NodeId,
    pub count: u64,
    pub mean_rating: f64,
    /// Counts for ratings 1 through 5.
    pub histogram: [u64; 5],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    #[serde(default = "default_coverage")]
    pub coverage_forecast: f64,
    #[serde(default = "default_coverage")]
    pub coverage_option: f64,
    #[serde(default = "default_coverage")]
    pub coverage_relevance: f64,
    /// Explanations are only drawn for when this is above zero.
    #[serde(default)]
    pub coverage_explanation: f64,
    #[serde(default = "default_annotator")]
    pub annotator: String,
}

pub const DEFAULT_COVERAGE: f64 = 0.5;

fn default_coverage() -> f64 {
    DEFAULT_COVERAGE
}

pub fn default_annotator() -> String {
    "synthetic-annotator".to_string()
}

impl SynthConfig {
    pub fn new(seed: u64, coverage: f64) -> Self {
        Self {
            seed,
            coverage_forecast: coverage,
            coverage_option: coverage,
            coverage_relevance: coverage,
            coverage_explanation: 0.0,
            annotator: default_annotator(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, c) in [
            ("forecast", self.coverage_forecast),
            ("option", self.coverage_option),
            ("relevance", self.coverage_relevance),
            ("explanation", self.coverage_explanation),
        ] {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::InvalidArgument(format!("coverage for {name} must be within [0, 1], got {c}")));
            }
        }
        if self.annotator.is_empty() {
            return Err(Error::InvalidArgument("annotator name must not be empty".into()));
        }
        Ok(())
    }

    fn coverage(&self, kind: &str) -> Option<f64> {
        match kind {
            node::FORECAST => Some(self.coverage_forecast),
            node::DECISION_OPTION => Some(self.coverage_option),
            node::FEATURE_RELEVANCE => Some(self.coverage_relevance),
            node::FORECAST_EXPLANATION if self.coverage_explanation > 0.0 => Some(self.coverage_explanation),
            _ => None,
        }
    }
}

fn check_rating(rating: i64) -> Result<()> {
    if !(1..=5).contains(&rating) {
        return Err(Error::InvalidArgument(format!("rating must be within 1..=5, got {rating}")));
    }
    Ok(())
}

fn expect_user(graph: &Graph, user: NodeId) -> Result<()> {
    match graph.node(user) {
        Some(n) if n.kind == node::USER => Ok(()),
        Some(n) => Err(Error::InvalidArgument(format!("{user} is a {}, not a User", n.kind))),
        None => Err(Error::UnknownId(user.to_string())),
    }
}

fn check_user_name(name: &str) -> Result<()> {
    if name.is_empty() {
        return Err(Error::InvalidArgument("user name must not be empty".into()));
    }
    Ok(())
}

fn stage_user(batch: &mut Batch<'_>, name: &str) -> NodeId {
    batch
        .graph()
        .find_node(node::USER, "name", &PropertyValue::Text(name.to_string()))
        .unwrap_or_else(|| batch.add_node(node::USER, props! {"name" => name}))
}

/// Returns the User node with this name, creating it on first use.
pub fn ensure_user(graph: &mut Graph, schema: &SchemaSpec, name: &str) -> Result<NodeId> {
    check_user_name(name)?;
    let mut batch = Batch::new(graph);
    let id = stage_user(&mut batch, name);
    let writes = batch.finish();
    schema.commit_checked(graph, writes)?;
    Ok(id)
}

fn stage_feedback(batch: &mut Batch<'_>, user: NodeId, target: NodeId, rating: i64, comment: &str, created_at: NaiveDate) -> Result<NodeId> {
    let feedback = batch.add_node(
        node::FEEDBACK,
        props! {"rating" => rating, "comment" => comment, "created_at" => created_at},
    );
    batch.add_edge(edge::ABOUT, feedback, target, props! {})?;
    batch.add_edge(edge::GAVE, user, feedback, props! {})?;
    Ok(feedback)
}

fn check_feedback_target(graph: &Graph, schema: &SchemaSpec, target: NodeId) -> Result<()> {
    let target_kind = &graph.node(target).ok_or_else(|| Error::UnknownId(target.to_string()))?.kind;
    let allowed = schema
        .edge_kind(edge::ABOUT)
        .is_some_and(|spec| spec.allows(node::FEEDBACK, target_kind));
    if !allowed {
        return Err(Error::InvalidArgument(format!("feedback cannot target a {target_kind} node")));
    }
    Ok(())
}

pub fn record_feedback(
    graph: &mut Graph,
    schema: &SchemaSpec,
    user: NodeId,
    target: NodeId,
    rating: i64,
    comment: &str,
    created_at: NaiveDate,
) -> Result<NodeId> {
    check_rating(rating)?;
    expect_user(graph, user)?;
    check_feedback_target(graph, schema, target)?;
    let mut batch = Batch::new(graph);
    let feedback = stage_feedback(&mut batch, user, target, rating, comment, created_at)?;
    let writes = batch.finish();
    schema.commit_checked(graph, writes)?;
    Ok(feedback)
}

/// Like [`record_feedback`], but identifies the user by name and creates the
/// User node in the same batch when it does not exist yet.
pub fn record_feedback_as(
    graph: &mut Graph,
    schema: &SchemaSpec,
    user_name: &str,
    target: NodeId,
    rating: i64,
    comment: &str,
    created_at: NaiveDate,
) -> Result<NodeId> {
    check_rating(rating)?;
    check_user_name(user_name)?;
    check_feedback_target(graph, schema, target)?;
    let mut batch = Batch::new(graph);
    let user = stage_user(&mut batch, user_name);
    let feedback = stage_feedback(&mut batch, user, target, rating, comment, created_at)?;
    let writes = batch.finish();
    schema.commit_checked(graph, writes)?;
    Ok(feedback)
}

fn check_action(graph: &Graph, option: NodeId, kind: &str) -> Result<()> {
    if !ACTION_KINDS.contains(&kind) {
        return Err(Error::InvalidArgument(format!("unknown action kind {kind:?}")));
    }
    match graph.node(option) {
        Some(n) if n.kind == node::DECISION_OPTION => Ok(()),
        Some(n) => Err(Error::InvalidArgument(format!("{option} is a {}, not a DecisionOption", n.kind))),
        None => Err(Error::UnknownId(option.to_string())),
    }
}

fn stage_action(batch: &mut Batch<'_>, user: NodeId, option: NodeId, kind: &str, created_at: NaiveDate) -> Result<NodeId> {
    let action = batch.add_node(node::ACTION, props! {"kind" => kind, "created_at" => created_at});
    batch.add_edge(edge::TOOK, user, action, props! {})?;
    batch.add_edge(edge::SELECTED, action, option, props! {})?;
    Ok(action)
}

pub fn record_action(
    graph: &mut Graph,
    schema: &SchemaSpec,
    user: NodeId,
    option: NodeId,
    kind: &str,
    created_at: NaiveDate,
) -> Result<NodeId> {
    expect_user(graph, user)?;
    check_action(graph, option, kind)?;
    let mut batch = Batch::new(graph);
    let action = stage_action(&mut batch, user, option, kind, created_at)?;
    let writes = batch.finish();
    schema.commit_checked(graph, writes)?;
    Ok(action)
}

pub fn record_action_as(
    graph: &mut Graph,
    schema: &SchemaSpec,
    user_name: &str,
    option: NodeId,
    kind: &str,
    created_at: NaiveDate,
) -> Result<NodeId> {
    check_user_name(user_name)?;
    check_action(graph, option, kind)?;
    let mut batch = Batch::new(graph);
    let user = stage_user(&mut batch, user_name);
    let action = stage_action(&mut batch, user, option, kind, created_at)?;
    let writes = batch.finish();
    schema.commit_checked(graph, writes)?;
    Ok(action)
}

pub fn summarize_feedback(graph: &Graph, target: NodeId) -> Result<FeedbackSummary> {
    if !graph.contains_node(target) {
        return Err(Error::UnknownId(target.to_string()));
    }
    let mut histogram = [0u64; 5];
    for e in graph.in_edges(target, edge::ABOUT) {
        let rating = graph
            .node(e.src)
            .filter(|n| n.kind == node::FEEDBACK)
            .and_then(|n| n.prop("rating"))
            .and_then(|v| v.as_integer());
        if let Some(r @ 1..=5) = rating {
            histogram[(r - 1) as usize] += 1;
        }
    }
    let count: u64 = histogram.iter().sum();
    let total: u64 = histogram.iter().zip(1..).map(|(n, r)| n * r).sum();
    let mean_rating = if count == 0 { 0.0 } else { total as f64 / count as f64 };
    Ok(FeedbackSummary {
        target,
        count,
        mean_rating,
        histogram,
    })
}

/// Adds seeded synthetic feedback. Eligible targets are visited in ascending
/// id order and each consumes one generator draw `u`: feedback is created when
/// `(u mod 1000) / 1000 < coverage`, with rating `1 + ((u >> 32) mod 5)`.
pub fn synthesize_feedback(graph: &mut Graph, schema: &SchemaSpec, config: &SynthConfig) -> Result<usize> {
    config.validate()?;
    let mut batch = Batch::new(graph);
    let annotator = stage_user(&mut batch, &config.annotator);
    let mut rng = SplitMix64::new(config.seed);
    let mut created = 0;
    for target in batch.graph().nodes() {
        let Some(coverage) = config.coverage(&target.kind) else {
            continue;
        };
        let u = rng.next_u64();
        if ((u % 1000) as f64) / 1000.0 < coverage {
            let rating = 1 + ((u >> 32) % 5) as i64;
            stage_feedback(&mut batch, annotator, target.id, rating, "", SYNTHETIC_DATE)?;
            created += 1;
        }
    }
    let writes = batch.finish();
    schema.commit_checked(graph, writes)?;
    Ok(created)
}

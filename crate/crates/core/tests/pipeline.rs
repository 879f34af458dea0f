use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, NaiveDate};
use proptest::prelude::*;

use xaikg_core::decision::{options_all, RulesConfig};
use xaikg_core::explanation::explain_all;
use xaikg_core::feedback::{ensure_user, record_feedback, summarize_feedback, synthesize_feedback, SynthConfig};
use xaikg_core::graph::Graph;
use xaikg_core::ingestion::{ingest_forecasts, ingest_relevance, ingest_shipments, ForecastRecord, RelevanceRecord, ShipmentRecord};
use xaikg_core::schema::builtin_xaikg_schema;
use xaikg_core::synthetic::{demo_dataset, run_demo_pipeline};
use xaikg_core::{ErrorCategory, SchemaSpec};

const NODE_KINDS: [&str; 13] = [
    "UseCase", "AIModel", "Material", "Client", "Shipment", "Forecast", "Feature", "FeatureRelevance",
    "ForecastExplanation", "DecisionOption", "Feedback", "User", "Action",
];

const ALLOWED: [(&str, &str, &str); 17] = [
    ("SERVES", "AIModel", "UseCase"),
    ("PRODUCED", "AIModel", "Forecast"),
    ("FOR_MATERIAL", "Forecast", "Material"),
    ("FOR_MATERIAL", "Shipment", "Material"),
    ("FOR_CLIENT", "Forecast", "Client"),
    ("FOR_CLIENT", "Shipment", "Client"),
    ("HAS_RELEVANCE", "Forecast", "FeatureRelevance"),
    ("OF_FEATURE", "FeatureRelevance", "Feature"),
    ("EXPLAINED_BY", "Forecast", "ForecastExplanation"),
    ("BASED_ON", "ForecastExplanation", "FeatureRelevance"),
    ("SUGGESTS", "Forecast", "DecisionOption"),
    ("ABOUT", "Feedback", "Forecast"),
    ("ABOUT", "Feedback", "ForecastExplanation"),
    ("ABOUT", "Feedback", "DecisionOption"),
    ("ABOUT", "Feedback", "FeatureRelevance"),
    ("GAVE", "User", "Feedback"),
    ("TOOK", "User", "Action"),
];

fn day(n: i64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + Duration::days(n)
}

#[test]
fn kind_matrix_accepts_exactly_the_enumerated_pairs() {
    let schema = builtin_xaikg_schema();
    let mut allowed: BTreeSet<(&str, &str, &str)> = ALLOWED.into_iter().collect();
    allowed.insert(("SELECTED", "Action", "DecisionOption"));
    let edge_kinds: BTreeSet<&str> = allowed.iter().map(|t| t.0).collect();
    assert_eq!(edge_kinds.len(), 13);
    assert_eq!(schema.node_kinds.len(), 13);
    assert_eq!(schema.edge_kinds.len(), 13);

    let mut accepted = BTreeSet::new();
    for kind in &edge_kinds {
        for src in NODE_KINDS {
            for dst in NODE_KINDS {
                if schema.validate_edge(kind, src, dst, &BTreeMap::new()).is_empty() {
                    accepted.insert((*kind, src, dst));
                }
            }
        }
    }
    assert_eq!(accepted, allowed);
}

/// Revalidates every stored element, i.e. strict mode over the whole graph.
fn violations(graph: &Graph, schema: &SchemaSpec) -> usize {
    let nodes: usize = graph.nodes().iter().map(|n| schema.validate_node(&n.kind, &n.props).len()).sum();
    let edges: usize = graph
        .edges()
        .iter()
        .map(|e| {
            let src = &graph.node(e.src).unwrap().kind;
            let dst = &graph.node(e.dst).unwrap().kind;
            schema.validate_edge(&e.kind, src, dst, &e.props).len()
        })
        .sum();
    nodes + edges
}

#[test]
fn full_pipeline_has_no_violations() {
    let schema = builtin_xaikg_schema();
    let mut g = Graph::new();
    run_demo_pipeline(&mut g, &schema, &demo_dataset()).unwrap();
    let mut config = SynthConfig::new(3, 1.0);
    config.coverage_explanation = 1.0;
    synthesize_feedback(&mut g, &schema, &config).unwrap();
    let kinds: BTreeSet<&str> = g.nodes().iter().map(|n| n.kind.as_str()).collect();
    assert_eq!(kinds.len(), 12, "every kind but Action is produced: {kinds:?}");
    assert_eq!(violations(&g, &schema), 0);
}

#[test]
fn feedback_survives_later_pipeline_steps_unchanged() {
    let schema = builtin_xaikg_schema();
    let data = demo_dataset();
    let mut g = Graph::new();
    ingest_shipments(&mut g, &schema, &data.shipments).unwrap();
    ingest_forecasts(&mut g, &schema, &data.forecasts).unwrap();
    ingest_relevance(&mut g, &schema, &data.relevances).unwrap();
    synthesize_feedback(&mut g, &schema, &SynthConfig::new(1, 0.5)).unwrap();
    let before: Vec<_> = g.nodes().iter().filter(|n| n.kind == "Feedback").cloned().collect();
    assert!(!before.is_empty());

    explain_all(&mut g, &schema, 3).unwrap();
    options_all(&mut g, &schema, &RulesConfig::default()).unwrap();
    synthesize_feedback(&mut g, &schema, &SynthConfig::new(2, 0.5)).unwrap();
    for n in &before {
        assert_eq!(g.node(n.id), Some(n));
    }
}

#[test]
fn synthesis_is_deterministic() {
    let schema = builtin_xaikg_schema();
    let run = |seed| {
        let mut g = Graph::new();
        run_demo_pipeline(&mut g, &schema, &demo_dataset()).unwrap();
        synthesize_feedback(&mut g, &schema, &SynthConfig::new(seed, 0.4)).unwrap();
        g.to_jsonl()
    };
    assert_eq!(run(7), run(7));
    assert_ne!(run(7), run(8));
}

#[test]
fn summary_tracks_running_mean() {
    let schema = builtin_xaikg_schema();
    let mut g = Graph::new();
    run_demo_pipeline(&mut g, &schema, &demo_dataset()).unwrap();
    let target = g.nodes_of_kind("Forecast")[0];
    let user = ensure_user(&mut g, &schema, "ana").unwrap();
    let ratings = [3, 5, 1, 1, 4, 2, 5, 5];
    for (i, r) in ratings.iter().enumerate() {
        record_feedback(&mut g, &schema, user, target, *r, "", day(40)).unwrap();
        let s = summarize_feedback(&g, target).unwrap();
        let sum: i64 = ratings[..=i].iter().sum();
        assert_eq!(s.count, i as u64 + 1);
        assert_eq!(s.histogram.iter().sum::<u64>(), s.count);
        // mean * count recovers the integer sum exactly at this scale
        assert_eq!((s.mean_rating * s.count as f64).round() as i64, sum);
        assert!((s.mean_rating - sum as f64 / (i + 1) as f64).abs() < 1e-12);
    }
}

fn shipments(s: usize, m: usize, c: usize) -> Vec<ShipmentRecord> {
    // every material and client appears at least once when s >= max(m, c)
    (0..s)
        .map(|i| ShipmentRecord {
            date: day(i as i64 % 30),
            material_id: format!("M{}", i % m),
            client_id: format!("C{}", i % c),
            quantity: i as f64,
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn count_formulas(m in 1usize..6, c in 1usize..6, extra in 0usize..20, f in 1usize..8, k in 1usize..6, r_per in 0usize..6) {
        let schema = builtin_xaikg_schema();
        let s = m.max(c) + extra;
        let mut g = Graph::new();
        let added = ingest_shipments(&mut g, &schema, &shipments(s, m, c)).unwrap();
        prop_assert_eq!((added.nodes_added, added.edges_added), (s + m + c, 2 * s));
        prop_assert_eq!((g.node_count(), g.edge_count()), (s + m + c, 2 * s));

        // forecasts reuse the shipment materials and clients
        let forecasts: Vec<ForecastRecord> = (0..f)
            .map(|i| ForecastRecord {
                forecast_id: format!("f{i}"),
                model_id: "model".into(),
                use_case: "uc".into(),
                material_id: format!("M{}", i % m),
                client_id: format!("C{}", i % c),
                target_date: day(31),
                created_at: day(30),
                quantity: 5.0,
            })
            .collect();
        // each forecast gets a prefix of the k features; forecast 0 uses all k
        let r_per = r_per.min(k).max(1);
        let relevances: Vec<RelevanceRecord> = (0..f)
            .flat_map(|i| {
                let n = if i == 0 { k } else { r_per };
                (0..n).map(move |j| RelevanceRecord {
                    forecast_id: format!("f{i}"),
                    feature: format!("feat{j}"),
                    weight: (j as f64 - 2.0) / 4.0,
                })
            })
            .collect();
        let r = relevances.len();
        let before = (g.node_count(), g.edge_count());
        ingest_forecasts(&mut g, &schema, &forecasts).unwrap();
        ingest_relevance(&mut g, &schema, &relevances).unwrap();
        prop_assert_eq!(g.node_count() - before.0, 2 + f + k + r);
        prop_assert_eq!(g.edge_count() - before.1, 1 + 3 * f + 2 * r);

        for kind in ["Material", "Client", "Feature", "AIModel", "UseCase"] {
            let key = match kind { "Material" | "Client" => "code", _ => "name" };
            let ids = g.nodes_of_kind(kind);
            let values: BTreeSet<String> = ids.iter().map(|id| g.node(*id).unwrap().prop(key).unwrap().to_json_text()).collect();
            prop_assert_eq!(values.len(), ids.len());
        }

        for fid in g.nodes_of_kind("Forecast") {
            let mut ranks: Vec<i64> = g
                .out_edges(*fid, "HAS_RELEVANCE")
                .map(|e| g.node(e.dst).unwrap().prop("rank").unwrap().as_integer().unwrap())
                .collect();
            ranks.sort();
            let expected = if g.node(*fid).unwrap().prop("source_id").unwrap().as_text() == Some("f0") { k } else { r_per };
            prop_assert_eq!(ranks, (1..=expected as i64).collect::<Vec<_>>());
        }
    }

    #[test]
    fn bad_record_leaves_graph_unchanged(bad in 0usize..10, len in 1usize..10) {
        let schema = builtin_xaikg_schema();
        let mut g = Graph::new();
        ingest_forecasts(&mut g, &schema, &[ForecastRecord {
            forecast_id: "f0".into(), model_id: "m".into(), use_case: "u".into(),
            material_id: "M".into(), client_id: "C".into(),
            target_date: day(1), created_at: day(0), quantity: 1.0,
        }]).unwrap();
        let counts = (g.node_count(), g.edge_count());
        let records: Vec<RelevanceRecord> = (0..len)
            .map(|i| RelevanceRecord {
                forecast_id: if i == bad % len { "fX".into() } else { "f0".into() },
                feature: format!("x{i}"),
                weight: 0.1,
            })
            .collect();
        let err = ingest_relevance(&mut g, &schema, &records).unwrap_err();
        prop_assert_eq!(err.category(), ErrorCategory::UnknownId);
        prop_assert_eq!((g.node_count(), g.edge_count()), counts);
    }
}

#[test]
fn explanations_use_top_ranked_features() {
    let schema = builtin_xaikg_schema();
    let mut g = Graph::new();
    run_demo_pipeline(&mut g, &schema, &demo_dataset()).unwrap();
    let explanations = g.nodes_of_kind("ForecastExplanation");
    assert_eq!(explanations.len(), 6);
    for x in explanations {
        let weights: Vec<f64> = g
            .out_edges(*x, "BASED_ON")
            .map(|e| g.node(e.dst).unwrap().prop("weight").unwrap().as_decimal().unwrap().abs())
            .collect();
        assert_eq!(weights.len(), 3);
        assert!(weights.windows(2).all(|w| w[0] >= w[1]), "{weights:?}");
    }
}

//! Deterministic demo dataset: daily shipments, one forecast per
//! material/client pair and per-forecast feature relevances, plus writers for
//! the on-disk formats the ingesters read.

use chrono::{Duration, NaiveDate};
use serde::Serialize;

use crate::decision::{options_all, RulesConfig};
use crate::error::Result;
use crate::explanation::{explain_all, DEFAULT_TOP_K};
use crate::graph::Graph;
use crate::ingestion::{
    ingest_forecasts, ingest_relevance, ingest_shipments, ForecastRecord, IngestCounts, RelevanceRecord,
    ShipmentRecord, SHIPMENTS_HEADER,
};
use crate::rng::SplitMix64;
use crate::schema::SchemaSpec;

pub const DEMO_SEED: u64 = 2021;
pub const DEMO_FEATURES: [&str; 5] = ["day_of_week", "holiday", "lead_time", "price", "promotion"];

/// Forecast quantity relative to the mean shipped quantity, per pair; picked
/// so the default rules see surges, drops and steady demand.
const FORECAST_FACTORS: [f64; 6] = [1.6, 0.5, 1.0, 1.3, 0.7, 1.05];

#[derive(Clone, Debug, PartialEq)]
pub struct DemoDataset {
    pub shipments: Vec<ShipmentRecord>,
    pub forecasts: Vec<ForecastRecord>,
    pub relevances: Vec<RelevanceRecord>,
}

#[derive(Clone, Copy, Debug)]
pub struct DemoShape {
    pub days: u32,
    pub materials: u32,
    pub clients: u32,
    pub seed: u64,
}

impl Default for DemoShape {
    fn default() -> Self {
        Self {
            days: 30,
            materials: 3,
            clients: 2,
            seed: DEMO_SEED,
        }
    }
}

/// 30 days x 3 materials x 2 clients of shipments, 6 forecasts, 5 features.
pub fn demo_dataset() -> DemoDataset {
    demo_dataset_with(DemoShape::default())
}

pub fn demo_dataset_with(shape: DemoShape) -> DemoDataset {
    let mut rng = SplitMix64::new(shape.seed);
    let start = NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date");
    let pairs: Vec<(String, String)> = (1..=shape.materials)
        .flat_map(|m| (1..=shape.clients).map(move |c| (format!("M{m}"), format!("C{c}"))))
        .collect();

    let mut shipments = Vec::new();
    for day in 0..shape.days {
        let date = start + Duration::days(i64::from(day));
        for (material, client) in &pairs {
            shipments.push(ShipmentRecord {
                date,
                material_id: material.clone(),
                client_id: client.clone(),
                quantity: (10 + rng.next_u64() % 11) as f64,
            });
        }
    }

    let target = start + Duration::days(i64::from(shape.days));
    let forecasts: Vec<ForecastRecord> = pairs
        .iter()
        .enumerate()
        .map(|(i, (material, client))| ForecastRecord {
            forecast_id: format!("f{}", i + 1),
            model_id: "gradient-boosting-v1".into(),
            use_case: "demand-forecasting".into(),
            material_id: material.clone(),
            client_id: client.clone(),
            target_date: target,
            created_at: target - Duration::days(1),
            quantity: 15.0 * FORECAST_FACTORS[i % FORECAST_FACTORS.len()],
        })
        .collect();

    let relevances = forecasts
        .iter()
        .flat_map(|f| DEMO_FEATURES.iter().map(move |feature| (f.forecast_id.clone(), *feature)))
        .map(|(forecast_id, feature)| RelevanceRecord {
            forecast_id,
            feature: feature.to_string(),
            weight: ((rng.next_u64() % 2001) as i64 - 1000) as f64 / 1000.0,
        })
        .collect();

    DemoDataset {
        shipments,
        forecasts,
        relevances,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PipelineReport {
    pub ingested: IngestCounts,
    pub explanations: usize,
    pub options: usize,
}

/// Ingests the dataset, explains every forecast with the default top-k and
/// generates options with the default rules.
pub fn run_demo_pipeline(graph: &mut Graph, schema: &SchemaSpec, data: &DemoDataset) -> Result<PipelineReport> {
    let ingested = ingest_shipments(graph, schema, &data.shipments)?
        + ingest_forecasts(graph, schema, &data.forecasts)?
        + ingest_relevance(graph, schema, &data.relevances)?;
    let explanations = explain_all(graph, schema, DEFAULT_TOP_K)?;
    let options = options_all(graph, schema, &RulesConfig::default())?;
    Ok(PipelineReport {
        ingested,
        explanations,
        options,
    })
}

pub fn shipments_csv(records: &[ShipmentRecord]) -> String {
    let mut out = SHIPMENTS_HEADER.join(",");
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.date.format("%Y-%m-%d"),
            r.material_id,
            r.client_id,
            r.quantity
        ));
    }
    out
}

pub fn forecasts_json(records: &[ForecastRecord]) -> String {
    serde_json::to_string_pretty(records).expect("records serialize")
}

pub fn relevance_jsonl(records: &[RelevanceRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
        .collect()
}

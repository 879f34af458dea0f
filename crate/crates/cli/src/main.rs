use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use xaikg_core::decision::{options_all, RulesConfig};
use xaikg_core::explanation::{explain_all, DEFAULT_TOP_K};
use xaikg_core::feedback::{default_annotator, record_action_as, record_feedback_as, synthesize_feedback, SynthConfig, DEFAULT_COVERAGE};
use xaikg_core::graph::parse_date;
use xaikg_core::ingestion::{
    ingest_forecasts, ingest_relevance, ingest_shipments, parse_forecasts_json, parse_relevance_jsonl,
    parse_shipments_csv, IngestCounts,
};
use xaikg_core::metrics::{exact_metrics, sampled_metrics};
use xaikg_core::query::forecast_detail;
use xaikg_core::schema::{builtin_xaikg_schema, dump_schema, load_schema};
use xaikg_core::synthetic::{demo_dataset, forecasts_json, relevance_jsonl, shipments_csv};
use xaikg_core::{Error, ErrorCategory, Graph, NodeId, SchemaSpec};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_SCHEMA: u8 = 3;
const EXIT_CONFLICT: u8 = 4;

/// Build, explain and inspect a forecasting knowledge graph stored in a JSONL snapshot file.
#[derive(Debug, Parser)]
#[command(name = "xaikg", version)]
struct Cli {
    /// Graph snapshot file. Missing files start an empty graph.
    #[arg(long, global = true, value_name = "FILE")]
    graph: Option<PathBuf>,
    /// Schema descriptor; defaults to the builtin schema.
    #[arg(long, global = true, value_name = "FILE")]
    schema: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest shipments, forecasts and feature relevances, in that order.
    Ingest {
        #[arg(long, value_name = "CSV")]
        shipments: Option<PathBuf>,
        #[arg(long, value_name = "JSON")]
        forecasts: Option<PathBuf>,
        #[arg(long, value_name = "JSONL")]
        relevance: Option<PathBuf>,
    },
    /// Explain every forecast that has no explanation yet.
    Explain {
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        k: usize,
    },
    /// Generate decision options for every forecast that has none yet.
    Options {
        /// Rules file; defaults to the bundled rules.
        #[arg(long, value_name = "FILE")]
        rules: Option<PathBuf>,
    },
    /// Add seeded synthetic feedback.
    SynthFeedback(SynthArgs),
    /// Record one feedback rating.
    Feedback {
        #[arg(long)]
        user: String,
        #[arg(long, value_name = "NODE_ID")]
        target: NodeId,
        #[arg(long)]
        rating: i64,
        #[arg(long, default_value = "")]
        comment: String,
        #[arg(long, value_name = "YYYY-MM-DD", value_parser = date_arg)]
        date: NaiveDate,
    },
    /// Record a user action on a decision option.
    Action {
        #[arg(long)]
        user: String,
        #[arg(long, value_name = "NODE_ID")]
        option: NodeId,
        /// accepted, rejected or modified
        #[arg(long)]
        kind: String,
        #[arg(long, value_name = "YYYY-MM-DD", value_parser = date_arg)]
        date: NaiveDate,
    },
    /// Print a forecast with its explanation, options and feedback.
    Show {
        #[arg(value_name = "NODE_ID")]
        forecast: NodeId,
    },
    /// Print path metrics, exact or sampled.
    Metrics {
        /// Fraction of nodes used as traversal sources.
        #[arg(long, value_name = "FRACTION")]
        sample: Option<f64>,
        #[arg(long, default_value_t = 0, requires = "sample")]
        seed: u64,
    },
    /// Write the graph snapshot to a file.
    Export {
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Print the schema descriptor.
    Schema,
    /// Serve the HTTP API; the graph is written back on Ctrl-C.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Write the deterministic demo input files into a directory.
    DemoData {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_COVERAGE)]
    coverage_forecast: f64,
    #[arg(long, default_value_t = DEFAULT_COVERAGE)]
    coverage_option: f64,
    #[arg(long, default_value_t = DEFAULT_COVERAGE)]
    coverage_relevance: f64,
    #[arg(long, default_value_t = 0.0)]
    coverage_explanation: f64,
    #[arg(long, default_value_t = default_annotator())]
    annotator: String,
}

fn date_arg(s: &str) -> Result<NaiveDate, String> {
    parse_date(s).ok_or_else(|| format!("expected YYYY-MM-DD, got {s:?}"))
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Core(e.into())
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Parse | ErrorCategory::InvalidArgument | ErrorCategory::Io => EXIT_DATA,
        ErrorCategory::SchemaViolation => EXIT_SCHEMA,
        ErrorCategory::UnknownId | ErrorCategory::Conflict => EXIT_CONFLICT,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, value).map_err(io::Error::from)?;
    writeln!(out)?;
    Ok(())
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::parse(path.display().to_string(), e))
}

fn load_schema_file(path: Option<&Path>) -> Result<SchemaSpec, Failure> {
    match path {
        None => Ok(builtin_xaikg_schema()),
        Some(p) => Ok(load_schema(&read(p)?).map_err(Error::from)?),
    }
}

fn load_graph(path: &Path, schema: &SchemaSpec) -> Result<Graph, Failure> {
    match File::open(path) {
        Ok(f) => Ok(Graph::import_jsonl_with(BufReader::new(f), schema).map_err(Error::from)?),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Graph::new()),
        Err(e) => Err(e.into()),
    }
}

/// Writes the snapshot next to `path` and renames it into place.
fn save_graph(graph: &Graph, path: &Path) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    let mut sink = io::BufWriter::new(tmp.as_file_mut());
    graph.export_jsonl(&mut sink)?;
    sink.flush()?;
    drop(sink);
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn require_graph(cli: &Cli) -> Result<&Path, Failure> {
    cli.graph
        .as_deref()
        .ok_or_else(|| Failure::Usage("this command needs --graph FILE".into()))
}

/// Loads the graph, applies `op` and writes the graph back if `op` succeeded.
fn with_graph<T: serde::Serialize>(
    cli: &Cli,
    op: impl FnOnce(&mut Graph, &SchemaSpec) -> Result<T, Error>,
) -> Result<(), Failure> {
    let path = require_graph(cli)?;
    let schema = load_schema_file(cli.schema.as_deref())?;
    let mut graph = load_graph(path, &schema)?;
    let out = op(&mut graph, &schema)?;
    save_graph(&graph, path)?;
    print_json(&out)
}

fn read_graph(cli: &Cli) -> Result<Graph, Failure> {
    let path = require_graph(cli)?;
    let schema = load_schema_file(cli.schema.as_deref())?;
    load_graph(path, &schema)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Ingest {
            shipments,
            forecasts,
            relevance,
        } => {
            if shipments.is_none() && forecasts.is_none() && relevance.is_none() {
                return Err(Failure::Usage("ingest needs at least one of --shipments, --forecasts, --relevance".into()));
            }
            let shipments = shipments
                .as_deref()
                .map(|p| parse_shipments_csv(read(p)?.as_bytes()).map_err(|e| located(p, e)))
                .transpose()?;
            let forecasts = forecasts
                .as_deref()
                .map(|p| parse_forecasts_json(read(p)?.as_bytes()).map_err(|e| located(p, e)))
                .transpose()?;
            let relevance = relevance
                .as_deref()
                .map(|p| parse_relevance_jsonl(read(p)?.as_bytes()).map_err(|e| located(p, e)))
                .transpose()?;
            with_graph(&cli, |g, s| {
                let mut counts = IngestCounts::default();
                if let Some(r) = &shipments {
                    counts = counts + ingest_shipments(g, s, r)?;
                }
                if let Some(r) = &forecasts {
                    counts = counts + ingest_forecasts(g, s, r)?;
                }
                if let Some(r) = &relevance {
                    counts = counts + ingest_relevance(g, s, r)?;
                }
                Ok(counts)
            })
        }
        Command::Explain { k } => {
            if *k < 1 {
                return Err(Failure::Usage("--k must be at least 1".into()));
            }
            with_graph(&cli, |g, s| Ok(json!({"created": explain_all(g, s, *k)?})))
        }
        Command::Options { rules } => {
            let rules = match rules {
                Some(p) => RulesConfig::from_json(&read(p)?)?,
                None => RulesConfig::default(),
            };
            with_graph(&cli, |g, s| Ok(json!({"created": options_all(g, s, &rules)?})))
        }
        Command::SynthFeedback(a) => {
            let config = SynthConfig {
                seed: a.seed,
                coverage_forecast: a.coverage_forecast,
                coverage_option: a.coverage_option,
                coverage_relevance: a.coverage_relevance,
                coverage_explanation: a.coverage_explanation,
                annotator: a.annotator.clone(),
            };
            config.validate()?;
            with_graph(&cli, |g, s| Ok(json!({"created": synthesize_feedback(g, s, &config)?})))
        }
        Command::Feedback {
            user,
            target,
            rating,
            comment,
            date,
        } => with_graph(&cli, |g, s| {
            Ok(json!({"feedback_id": record_feedback_as(g, s, user, *target, *rating, comment, *date)?}))
        }),
        Command::Action {
            user,
            option,
            kind,
            date,
        } => with_graph(&cli, |g, s| Ok(json!({"action_id": record_action_as(g, s, user, *option, kind, *date)?}))),
        Command::Show { forecast } => print_json(&forecast_detail(&read_graph(&cli)?, *forecast)?),
        Command::Metrics { sample, seed } => {
            if let Some(f) = sample {
                if !(*f > 0.0 && *f <= 1.0) {
                    return Err(Error::InvalidArgument(format!("sample fraction must be in (0, 1], got {f}")).into());
                }
            }
            let graph = read_graph(&cli)?;
            match sample {
                Some(f) => print_json(&sampled_metrics(&graph, *f, *seed)?),
                None => print_json(&exact_metrics(&graph)),
            }
        }
        Command::Export { out } => {
            let graph = read_graph(&cli)?;
            save_graph(&graph, out)
        }
        Command::Schema => {
            let schema = load_schema_file(cli.schema.as_deref())?;
            println!("{}", dump_schema(&schema));
            Ok(())
        }
        Command::Serve { port, host } => serve(&cli, host, *port),
        Command::DemoData { out } => {
            let d = demo_dataset();
            fs::create_dir_all(out)?;
            fs::write(out.join("shipments.csv"), shipments_csv(&d.shipments))?;
            fs::write(out.join("forecasts.json"), forecasts_json(&d.forecasts))?;
            fs::write(out.join("relevance.jsonl"), relevance_jsonl(&d.relevances))?;
            print_json(&json!({
                "shipments": d.shipments.len(),
                "forecasts": d.forecasts.len(),
                "relevances": d.relevances.len(),
            }))
        }
    }
}

fn located(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse { location, message } => Error::parse(format!("{}: {location}", path.display()), message),
        other => other,
    }
}

fn serve(cli: &Cli, host: &str, port: u16) -> Result<(), Failure> {
    let path = require_graph(cli)?.to_path_buf();
    let schema = load_schema_file(cli.schema.as_deref())?;
    let graph = load_graph(&path, &schema)?;
    let state = xaikg_service::SharedState::new(graph, schema);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port)).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        xaikg_service::serve(listener, state.clone(), shutdown).await?;
        let s = state.read().await;
        save_graph(&s.graph, &path)
    })
}

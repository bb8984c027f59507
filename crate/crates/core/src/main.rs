use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use worksight::learners::{EvalReport, ModelFamily, ModelSpec};
use worksight::model::{PieceId, SessionId, WorkerId};
use worksight::service::error::ErrorBody;
use worksight::service::http::{self, AppState};
use worksight::service::pipeline::{self, ExplainOptions, RecordInput, TrainRequest};
use worksight::service::{Registry, Scenario, ServiceError, WindowSpec};
use worksight::simulator::{generate_corpus, CorpusConfig};

/// `println!` that exits quietly when the reader has gone away.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        if let Err(e) = writeln!(std::io::stdout(), $($arg)*) {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                std::process::exit(0);
            }
        }
    }};
}
use worksight::store::{read_csv, RecordKind, Records, Store, StoreError};

#[derive(Parser)]
#[command(name = "worksight", version, about = "Worker-performance analytics over workstation events")]
struct Cli {
    /// Store directory.
    #[arg(long, global = true, env = "STORE_ROOT", default_value = "data")]
    store: PathBuf,
    /// Print machine-readable JSON.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus into a store.
    Simulate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Target store; defaults to --store.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        days: usize,
    },
    /// Ingest a JSON, NDJSON or CSV file.
    Ingest {
        file: PathBuf,
        /// pieces or sessions; inferred for JSON documents.
        #[arg(long)]
        kind: Option<RecordKind>,
    },
    /// Write stored records as CSV.
    Export {
        #[arg(long, default_value = "sessions")]
        kind: RecordKind,
        #[command(flatten)]
        window: WindowArgs,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Select features, cross-validate and register a model.
    Train(TrainArgs),
    /// Select features and cross-validate without registering.
    Evaluate(TrainArgs),
    /// Classify a stored record.
    Predict(RecordArgs),
    /// Explain a stored record and print its report.
    Explain {
        #[command(flatten)]
        record: RecordArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// KPI snapshot, baselines and verdicts of one worker and day.
    Kpis {
        #[arg(long)]
        worker: String,
        /// YYYY-MM-DD; defaults to the worker's latest day.
        #[arg(long)]
        date: Option<NaiveDate>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "0.0.0.0")]
        host: std::net::IpAddr,
    },
}

#[derive(Args)]
struct WindowArgs {
    /// Window start, epoch seconds.
    #[arg(long)]
    from: Option<f64>,
    /// Window end, epoch seconds.
    #[arg(long)]
    to: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// 1 (pieces) or 2 (tasks).
    #[arg(long, default_value = "2")]
    scenario: Scenario,
    /// svc_linear, svc_poly, svc_rbf, svc_sigmoid, random_forest or adaboost.
    #[arg(long = "model", default_value = "random_forest")]
    family: ModelFamily,
    #[arg(long, default_value_t = worksight::selection::DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = pipeline::DEFAULT_FOLDS)]
    folds: usize,
    #[command(flatten)]
    window: WindowArgs,
}

impl TrainArgs {
    fn request(&self) -> TrainRequest {
        TrainRequest {
            scenario: self.scenario,
            model_spec: ModelSpec::new(self.family, self.seed),
            window: WindowSpec { from: self.window.from, to: self.window.to },
            delta: self.delta,
            folds: self.folds,
        }
    }
}

#[derive(Args)]
struct RecordArgs {
    /// Registered model id.
    #[arg(long)]
    model: String,
    /// Stored task id.
    #[arg(long)]
    session: Option<String>,
    /// Stored piece as `<session>/<piece>`.
    #[arg(long, conflicts_with = "session")]
    piece: Option<String>,
    /// JSON file holding a record document.
    #[arg(long, conflicts_with_all = ["session", "piece"])]
    record: Option<PathBuf>,
}

impl RecordArgs {
    fn input(&self) -> Result<RecordInput, CliError> {
        if let Some(path) = &self.record {
            return Ok(RecordInput::from_value(read_json(path)?)?);
        }
        if let Some(p) = &self.piece {
            let (s, id) = p
                .split_once('/')
                .ok_or_else(|| CliError::Usage(format!("--piece expects <session>/<piece>, got {p:?}")))?;
            return Ok(RecordInput::Stored { session_id: SessionId::new(s), piece_id: Some(PieceId::new(id)) });
        }
        match &self.session {
            Some(s) => Ok(RecordInput::Stored { session_id: SessionId::new(s.as_str()), piece_id: None }),
            None => Err(CliError::Usage("one of --session, --piece or --record is required".into())),
        }
    }
}

enum CliError {
    Service(ServiceError),
    Usage(String),
    Internal(String),
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        CliError::Service(e)
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::Service(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Service(e) if e.is_validation() => 1,
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }

    fn body(&self) -> ErrorBody {
        match self {
            CliError::Service(e) => e.body(),
            CliError::Usage(m) => ErrorBody { code: "InvalidRequest".into(), message: m.clone(), detail: Value::Null },
            CliError::Internal(m) => ErrorBody { code: "Internal".into(), message: m.clone(), detail: Value::Null },
        }
    }
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn print_json<T: Serialize>(v: &T) {
    out!("{}", serde_json::to_string_pretty(v).expect("serializable output"));
}

fn print_eval(r: &EvalReport) {
    out!("accuracy          {:.4}", r.accuracy);
    out!("macro precision   {:.4}", r.macro_precision);
    out!("macro recall      {:.4}", r.macro_recall);
    out!("macro F-measure   {:.4}", r.macro_f_measure);
    for (name, c) in [("expert", &r.per_class_expert), ("inexpert", &r.per_class_inexpert)] {
        out!("{name:<9} P {:.4}  R {:.4}  F {:.4}  support {}", c.precision, c.recall, c.f_measure, c.support);
    }
    let m = &r.confusion_matrix.counts;
    out!("confusion         [[{}, {}], [{}, {}]]", m[0][0], m[0][1], m[1][0], m[1][1]);
    out!("total time        {:.3} s", r.total_time);
}

/// Documents from a JSON array, a single object or NDJSON lines.
fn json_documents(text: &str) -> Result<Vec<Value>, CliError> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Array(items)) => Ok(items),
        Ok(v) => Ok(vec![v]),
        Err(_) => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| {
                    CliError::Service(StoreError::MalformedDocument(format!("line {}: {e}", i + 1)).into())
                })
            })
            .collect(),
    }
}

fn ingest(store: &mut Store, file: &Path, kind: Option<RecordKind>) -> Result<usize, CliError> {
    if file.extension().and_then(|e| e.to_str()) == Some("csv") {
        let kind = kind.unwrap_or(RecordKind::Sessions);
        return Ok(match read_csv(kind, file)? {
            Records::Pieces(ps) => {
                ps.into_iter().map(|p| store.append_piece(p).map(|_| ())).collect::<Result<Vec<_>, _>>()?.len()
            }
            Records::Sessions(ss) => {
                ss.into_iter().map(|s| store.append_session(s).map(|_| ())).collect::<Result<Vec<_>, _>>()?.len()
            }
        });
    }
    let text = fs::read_to_string(file).map_err(|e| CliError::Usage(format!("{}: {e}", file.display())))?;
    let mut n = 0;
    for doc in json_documents(&text)? {
        let kind = kind.unwrap_or(if doc.get("pieces").is_some() { RecordKind::Sessions } else { RecordKind::Pieces });
        n += pipeline::ingest(store, kind, &doc)?.ingested;
    }
    Ok(n)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { seed, out, days } => {
            let root = out.unwrap_or(cli.store);
            let corpus = generate_corpus(&CorpusConfig { seed, days, ..CorpusConfig::default() });
            let mut store = Store::open(&root)?;
            corpus.populate(&mut store)?;
            store.persist_index()?;
            let summary = serde_json::json!({
                "store": root,
                "workers": corpus.workers.len(),
                "sessions": corpus.sessions.len(),
                "pieces": corpus.piece_count(),
            });
            if cli.json {
                print_json(&summary);
            } else {
                out!(
                    "wrote {} tasks and {} pieces for {} workers to {}",
                    corpus.sessions.len(),
                    corpus.piece_count(),
                    corpus.workers.len(),
                    root.display()
                );
            }
        }
        Command::Ingest { file, kind } => {
            let mut store = Store::open(&cli.store)?;
            let n = ingest(&mut store, &file, kind)?;
            store.persist_index()?;
            if cli.json {
                print_json(&serde_json::json!({ "ingested": n }));
            } else {
                out!("ingested {n} records");
            }
        }
        Command::Export { kind, window, out } => {
            let store = Store::open(&cli.store)?;
            let window = WindowSpec { from: window.from, to: window.to }.to_window()?;
            let csv = pipeline::export_csv(&store, kind, &window)?;
            match out {
                Some(path) => fs::write(&path, csv).map_err(|e| CliError::Internal(e.to_string()))?,
                None => print!("{csv}"),
            }
        }
        Command::Train(args) => {
            let store = Store::open(&cli.store)?;
            let mut registry = Registry::for_store(&cli.store)?;
            let entry = pipeline::train(&store, &mut registry, &args.request())?;
            if cli.json {
                print_json(&entry);
            } else {
                out!("model {} ({}, features: {})", entry.model_id, entry.spec.family, entry.feature_names.join(", "));
                print_eval(&entry.eval);
            }
        }
        Command::Evaluate(args) => {
            let store = Store::open(&cli.store)?;
            let outcome = pipeline::evaluate(&store, &args.request())?;
            if cli.json {
                print_json(&outcome);
            } else {
                out!("features: {}", outcome.feature_names.join(", "));
                print_eval(&outcome.eval);
            }
        }
        Command::Predict(args) => {
            let store = Store::open(&cli.store)?;
            let registry = Registry::for_store(&cli.store)?;
            let p = pipeline::predict(&store, registry.get(&args.model)?, args.input()?)?;
            if cli.json {
                print_json(&p);
            } else {
                out!("{}: {} ({:.0}% confidence)", p.instance_id, p.label, p.confidence * 100.0);
            }
        }
        Command::Explain { record, seed, top_k } => {
            let store = Store::open(&cli.store)?;
            let registry = Registry::for_store(&cli.store)?;
            let opts = ExplainOptions { seed, top_k, n_samples: None };
            let r = pipeline::explain(&store, registry.get(&record.model)?, record.input()?, &opts)?;
            if cli.json {
                print_json(&r);
            } else {
                out!("{}", r.report);
            }
        }
        Command::Kpis { worker, date } => {
            let store = Store::open(&cli.store)?;
            let worker = WorkerId::new(worker);
            let date = match date {
                Some(d) => d,
                None => pipeline::latest_date(&store, &worker)
                    .ok_or_else(|| ServiceError::NotFound(format!("worker {worker}")))?,
            };
            let report = pipeline::kpi_report(&store, &worker, date);
            if cli.json {
                print_json(&report);
            } else {
                out!("{worker} on {date}");
                for k in worksight::kpi::Kpi::ALL {
                    out!(
                        "{:<8} {:>10.3}  intra {:<7}  inter {:<7}",
                        k.symbol(),
                        report.snapshot.value(k),
                        format!("{:?}", report.intra_verdict.status(k)).to_lowercase(),
                        format!("{:?}", report.inter_verdict.status(k)).to_lowercase(),
                    );
                }
            }
        }
        Command::Serve { port, host } => {
            let state = AppState::open(&cli.store)?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
            let addr = std::net::SocketAddr::new(host, port);
            eprintln!("listening on {addr}");
            runtime.block_on(http::serve(state, addr)).map_err(|e| CliError::Internal(e.to_string()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = e.body();
            if json {
                eprintln!("{}", serde_json::to_string(&body).unwrap_or_default());
            } else {
                eprintln!("error [{}]: {}", body.code, body.message);
            }
            ExitCode::from(e.exit_code())
        }
    }
}

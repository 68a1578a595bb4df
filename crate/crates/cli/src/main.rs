//! `cohort`: build snapshots, annotate letters, run queries, generate demo
//! cohorts and serve the workbench API.
//!
//! Exit codes: 0 success, 1 bad input (arguments, unreadable or invalid
//! input files, invalid restrictions), 2 failure while producing output.

use std::fmt;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use cohort_core::demo::{generate, DemoConfig};
use cohort_core::extract::{annotate, Annotation, PipelineConfig};
use cohort_core::index::{read_snapshot, write_snapshot, Schema};
use cohort_core::ingest::{run_ingest, write_error_report, write_patients_jsonl, IngestManifest};
use cohort_core::par::{map_collect, Execution};
use cohort_core::query::Restriction;
use cohort_server::api;
use cohort_server::state::{AppState, Dataset, ServerConfig};
use serde::Serialize;

#[derive(Debug)]
enum Failure {
    Input(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Internal(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) | Failure::Internal(m) => f.write_str(m),
        }
    }
}

fn input(e: impl fmt::Display) -> Failure {
    Failure::Input(e.to_string())
}

fn internal(e: impl fmt::Display) -> Failure {
    Failure::Internal(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "cohort", version, about = "Cohort exploration over nested patient records")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Rates {
    /// Per-patient event rates of the published cohort.
    Paper,
    /// Light rates for quick experiments.
    Small,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum QueryFormat {
    /// Matching patient ids, one per line.
    Ids,
    /// The same JSON body `/api/search` returns.
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest the sources named in a TOML manifest and write a snapshot.
    Index {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON-lines report of skipped input rows.
        #[arg(long)]
        errors: Option<PathBuf>,
    },
    /// Annotate every `*.txt` file of a directory into JSON lines, ordered by file name.
    Annotate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dictionary directory with `system/` and optional `user/` TSV files.
        #[arg(long)]
        dict_dir: Option<PathBuf>,
        #[arg(long, requires = "dict_dir")]
        rules: Option<PathBuf>,
    },
    /// Evaluate restrictions against a snapshot.
    Query {
        #[arg(long)]
        snapshot: PathBuf,
        /// Inline JSON, `@file` or a file path; a restriction array or `{"restrictions": [...]}`.
        #[arg(long)]
        restrictions: String,
        #[arg(long, value_enum, default_value = "ids")]
        format: QueryFormat,
    },
    /// Generate a seeded synthetic cohort.
    Demo {
        #[arg(long)]
        patients: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "paper")]
        rates: Rates,
        #[arg(long)]
        out: PathBuf,
        /// Also write the records as JSON lines.
        #[arg(long)]
        jsonl: Option<PathBuf>,
    },
    /// Serve the HTTP/JSON API.
    Serve {
        #[arg(long, env = "COHORT_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "COHORT_HOST", default_value = "127.0.0.1")]
        host: String,
        /// Saved result sets, feedback log and user dictionary entries.
        #[arg(long, env = "COHORT_DATA_DIR", default_value = "cohort-data")]
        data_dir: PathBuf,
        /// Snapshot to serve; an empty cohort without one.
        #[arg(long, env = "COHORT_SNAPSHOT")]
        snapshot: Option<PathBuf>,
        #[arg(long, env = "COHORT_DICT_DIR")]
        dict_dir: Option<PathBuf>,
        #[arg(long, env = "COHORT_RULES", requires = "dict_dir")]
        rules: Option<PathBuf>,
        /// Default minimum count for facet menus.
        #[arg(long, env = "COHORT_MINCOUNT_DEFAULT", default_value_t = cohort_core::query::DEFAULT_MINCOUNT)]
        mincount_default: u32,
        /// Allowed CORS origin; any origin when unset.
        #[arg(long, env = "COHORT_CORS_ORIGIN")]
        cors_origin: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("cohort: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Index { manifest, out, errors } => index(&manifest, &out, errors.as_deref()),
        Command::Annotate {
            input,
            out,
            dict_dir,
            rules,
        } => annotate_dir(&input, &out, dict_dir.as_deref(), rules.as_deref()),
        Command::Query {
            snapshot,
            restrictions,
            format,
        } => query(&snapshot, &restrictions, format),
        Command::Demo {
            patients,
            seed,
            rates,
            out,
            jsonl,
        } => demo(patients, seed, rates, &out, jsonl.as_deref()),
        Command::Serve {
            port,
            host,
            data_dir,
            snapshot,
            dict_dir,
            rules,
            mincount_default,
            cors_origin,
        } => {
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| input(format!("address {host}:{port}: {e}")))?;
            let mut cfg = ServerConfig::new(data_dir);
            cfg.snapshot = snapshot;
            cfg.dict_dir = dict_dir;
            cfg.rules = rules;
            cfg.mincount_default = mincount_default;
            cfg.cors_origin = cors_origin;
            serve(cfg, addr)
        }
    }
}

fn index(manifest: &Path, out: &Path, errors: Option<&Path>) -> Result<(), Failure> {
    let m = IngestManifest::load(manifest).map_err(input)?;
    let outcome = run_ingest(&m).map_err(input)?;
    write_snapshot(out, &Schema::default(), &outcome.patients).map_err(internal)?;
    if let Some(path) = errors {
        write_error_report(path, &outcome.errors).map_err(internal)?;
    }
    eprintln!(
        "indexed {} patients into {} ({} skipped rows, {} findings without patient)",
        outcome.patients.len(),
        out.display(),
        outcome.errors.len(),
        outcome.pending.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct AnnotatedFile<'a> {
    file: &'a str,
    pipeline_version: u64,
    annotations: Vec<Annotation>,
}

fn annotate_dir(dir: &Path, out: &Path, dict_dir: Option<&Path>, rules: Option<&Path>) -> Result<(), Failure> {
    let cfg = match dict_dir {
        Some(d) => PipelineConfig::load(d, rules).map_err(input)?,
        None => PipelineConfig::builtin(),
    };
    let mut files: Vec<(String, String)> = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| input(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let path = entry.map_err(|e| input(format!("{}: {e}", dir.display())))?.path();
        if path.extension().is_some_and(|x| x == "txt") && path.is_file() {
            let name = path.file_name().unwrap_or_default().to_string_lossy().to_string();
            let text = fs::read_to_string(&path).map_err(|e| input(format!("{}: {e}", path.display())))?;
            files.push((name, text));
        }
    }
    files.sort();
    let annotated = map_collect(&files, Execution::default(), |(_, text)| annotate(text, &cfg));
    let mut buf = Vec::new();
    for ((name, _), annotations) in files.iter().zip(annotated) {
        let line = AnnotatedFile {
            file: name,
            pipeline_version: cfg.version(),
            annotations,
        };
        serde_json::to_writer(&mut buf, &line).map_err(internal)?;
        buf.push(b'\n');
    }
    fs::write(out, buf).map_err(|e| internal(format!("{}: {e}", out.display())))?;
    eprintln!("annotated {} files into {}", files.len(), out.display());
    Ok(())
}

/// Reads `--restrictions`: inline JSON, `@path` or a plain path.
fn read_restrictions(arg: &str) -> Result<Vec<Restriction>, Failure> {
    let trimmed = arg.trim_start();
    let text = if trimmed.starts_with('[') || trimmed.starts_with('{') {
        arg.to_string()
    } else {
        let path = arg.strip_prefix('@').unwrap_or(arg);
        fs::read_to_string(path).map_err(|e| input(format!("{path}: {e}")))?
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| input(format!("restrictions: {e}")))?;
    let list = match value {
        serde_json::Value::Object(mut o) => o.remove("restrictions").unwrap_or(serde_json::Value::Array(Vec::new())),
        other => other,
    };
    serde_json::from_value(list).map_err(|e| input(format!("restrictions: {e}")))
}

fn query(snapshot: &Path, restrictions: &str, format: QueryFormat) -> Result<(), Failure> {
    let rs = read_restrictions(restrictions)?;
    let ds = Dataset::load(snapshot).map_err(input)?;
    let limit = match format {
        QueryFormat::Ids => 0,
        QueryFormat::Json => ServerConfig::new(".").default_limit,
    };
    let resp = api::search(&ds, &rs, 0, limit).map_err(|e| match e.body.field {
        Some(f) => input(format!("{f}: {}", e.body.error)),
        None => input(e.body.error),
    })?;
    let mut out = std::io::stdout().lock();
    let written = match format {
        QueryFormat::Ids => resp.patient_ids.iter().try_for_each(|id| writeln!(out, "{id}")),
        QueryFormat::Json => serde_json::to_writer(&mut out, &resp)
            .map_err(std::io::Error::other)
            .and_then(|_| writeln!(out)),
    };
    written.map_err(internal)
}

fn demo(patients: usize, seed: u64, rates: Rates, out: &Path, jsonl: Option<&Path>) -> Result<(), Failure> {
    let cfg = match rates {
        Rates::Paper => DemoConfig::scaled(patients, seed),
        Rates::Small => DemoConfig::small(patients, seed),
    };
    let pats = generate(&cfg);
    write_snapshot(out, &Schema::default(), &pats).map_err(internal)?;
    if let Some(path) = jsonl {
        write_patients_jsonl(path, &pats).map_err(internal)?;
    }
    eprintln!("wrote {} patients to {}", pats.len(), out.display());
    Ok(())
}

fn serve(cfg: ServerConfig, addr: SocketAddr) -> Result<(), Failure> {
    let dataset = match &cfg.snapshot {
        Some(p) => {
            let (schema, pats) = read_snapshot(p).map_err(|e| input(format!("{}: {e}", p.display())))?;
            Dataset::new(&schema, pats).map_err(input)?
        }
        None => Dataset::new(&Schema::default(), Vec::new()).map_err(internal)?,
    };
    let state = Arc::new(AppState::new(cfg, dataset).map_err(input)?);
    let rt = tokio::runtime::Runtime::new().map_err(internal)?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| input(format!("bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(internal)?;
        eprintln!("listening on http://{local}");
        cohort_server::serve_on(state, listener).await.map_err(internal)
    })
}

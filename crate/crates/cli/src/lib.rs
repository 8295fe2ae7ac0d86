//! The `udi` command: serve the API, validate view specs and replay
//! transcripts.

pub mod replay;

use std::collections::BTreeMap;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use thiserror::Error;

use udi_core::agents::{Agents, RemoteBackend, RemoteConfig, ScriptedBackend};
use udi_core::data::{load_schema, load_tables, DatasetStore, SchemaDef};
use udi_core::grammar::{parse_spec, validate_against_schema};
use udi_server::AppState;

use replay::{run_transcript, write_outputs, Transcript};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("schema {path}: {message}")]
    Schema { path: String, message: String },
    #[error("tables: {0}")]
    Tables(String),
    #[error("transcript {0}")]
    Transcript(String),
    #[error("backend: {0}")]
    Backend(String),
    #[error("address in use: {0}")]
    AddressInUse(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendChoice {
    Scripted(PathBuf),
    Remote,
}

fn parse_backend(s: &str) -> Result<BackendChoice, String> {
    match s.split_once(':') {
        Some(("scripted", path)) if !path.is_empty() => Ok(BackendChoice::Scripted(PathBuf::from(path))),
        None if s == "remote" => Ok(BackendChoice::Remote),
        _ => Err("expected scripted:PATH or remote".into()),
    }
}

#[derive(Debug, Parser)]
#[command(name = "udi", version, about = "Conversational discovery over multi-entity metadata")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct DataArgs {
    /// Schema configuration document.
    #[arg(long = "data", value_name = "SCHEMA")]
    pub schema: PathBuf,
    /// Directory holding one `<entity>.csv` per entity. Defaults to the
    /// schema's directory.
    #[arg(long, value_name = "DIR")]
    pub tables: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP API.
    Serve {
        #[command(flatten)]
        data: DataArgs,
        /// `scripted:PATH` or `remote` (configured through UDI_* variables).
        #[arg(long, value_parser = parse_backend, default_value = "remote")]
        backend: BackendChoice,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
        /// Append each session's deltas to `<dir>/<session>.jsonl`.
        #[arg(long, value_name = "DIR")]
        log_dir: Option<PathBuf>,
    },
    /// Check a view spec against the grammar and a schema.
    ValidateSpec {
        spec: PathBuf,
        #[arg(long = "data", value_name = "SCHEMA")]
        schema: PathBuf,
    },
    /// Run a transcript through a fresh session and write its outputs.
    Replay {
        transcript: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn read_schema(path: &Path) -> Result<SchemaDef, CliError> {
    load_schema(&read(path)?).map_err(|e| CliError::Schema {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_store(schema_path: &Path, tables: Option<&Path>) -> Result<DatasetStore, CliError> {
    let schema = read_schema(schema_path)?;
    let dir = tables
        .map(Path::to_path_buf)
        .unwrap_or_else(|| schema_path.parent().unwrap_or(Path::new(".")).to_path_buf());
    let mut sources = BTreeMap::new();
    for entity in &schema.entities {
        let path = dir.join(format!("{}.csv", entity.name));
        sources.insert(entity.name.clone(), read(&path)?);
    }
    load_tables(&schema, &sources).map_err(|e| CliError::Tables(e.to_string()))
}

pub fn build_agents(choice: &BackendChoice) -> Result<Agents, CliError> {
    Ok(match choice {
        BackendChoice::Scripted(path) => {
            Agents::single(Arc::new(ScriptedBackend::load(path).map_err(|e| CliError::Backend(e.to_string()))?))
        }
        BackendChoice::Remote => Agents::new(
            Arc::new(RemoteBackend::new(RemoteConfig::router_from_env())),
            Arc::new(RemoteBackend::new(RemoteConfig::viz_from_env())),
        ),
    })
}

/// Validation report lines and whether the spec is valid.
pub fn validate_spec(spec_document: &str, schema: &SchemaDef) -> (bool, Vec<String>) {
    let errors = match parse_spec(spec_document) {
        Ok(spec) => validate_against_schema(&spec, schema),
        Err(errors) => errors,
    };
    if errors.is_empty() {
        (true, vec!["OK".into()])
    } else {
        (false, errors.iter().map(ToString::to_string).collect())
    }
}

/// Replays a transcript file into `out`; returns the number of failed steps.
pub fn replay_file(transcript: &Path, data: &DataArgs, out: &Path) -> Result<usize, CliError> {
    let t = Transcript::load(transcript)?;
    let store = Arc::new(load_store(&data.schema, data.tables.as_deref())?);
    let script = t
        .backend_script
        .clone()
        .ok_or_else(|| CliError::Transcript("has no backend_script".into()))?;
    let agents = build_agents(&BackendChoice::Scripted(script))?;
    let run = run_transcript(&t.messages, store, &agents);
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write_outputs(&run, out)?;
    for e in &run.errors {
        eprintln!("step {}: {}", e.step, e.error);
    }
    Ok(run.errors.len())
}

pub fn serve(data: &DataArgs, backend: &BackendChoice, listen: &str, log_dir: Option<PathBuf>) -> Result<(), CliError> {
    let store = Arc::new(load_store(&data.schema, data.tables.as_deref())?);
    let agents = build_agents(backend)?;
    let mut state = AppState::new(store, agents);
    if let Some(dir) = log_dir {
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        state = state.with_delta_log(dir);
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::io(Path::new("runtime"), e))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(listen).await.map_err(|e| match e.kind() {
            ErrorKind::AddrInUse => CliError::AddressInUse(listen.to_owned()),
            _ => CliError::io(Path::new(listen), e),
        })?;
        let addr = listener.local_addr().map_err(|e| CliError::io(Path::new(listen), e))?;
        eprintln!("serving on http://{addr}");
        udi_server::serve(listener, Arc::new(state))
            .await
            .map_err(|e| CliError::io(Path::new(listen), e))
    })
}

pub fn run(cli: Cli) -> ExitCode {
    let result = match cli.command {
        Command::Serve {
            data,
            backend,
            listen,
            log_dir,
        } => serve(&data, &backend, &listen, log_dir).map(|_| ExitCode::SUCCESS),
        Command::ValidateSpec { spec, schema } => read_schema(&schema).and_then(|schema| {
            let (ok, lines) = validate_spec(&read(&spec)?, &schema);
            for line in lines {
                println!("{line}");
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }),
        Command::Replay { transcript, data, out } => replay_file(&transcript, &data, &out).map(|failed| {
            if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::FAILURE
    })
}

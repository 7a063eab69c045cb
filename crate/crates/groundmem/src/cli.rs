//! `groundmem` command line.
//!
//! Exit codes: 0 on success, 1 for user errors (bad arguments, missing or
//! malformed input, empty question), 2 for internal failures (I/O, provider,
//! corrupt snapshot).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use groundmem_core::agent::AgentError;
use groundmem_core::perception::run_perception;
use groundmem_core::query::{explain, parse_query, run_query};

use crate::config::{Overrides, ProviderMode, RerankSetting, RouterSetting, ServiceConfig};
use crate::fixture::{load_fixture, record_for_window, to_jsonl};
use crate::live::{LiveCaptioner, Providers, SetupError};
use crate::service::{self, format_answer, format_stats, AppState};
use crate::snapshot::save_snapshot;
use crate::vault::{export_vault, import_vault};

#[derive(Debug, Parser)]
#[command(name = "groundmem", version, about = "Grounded memory: ingest captions, ask questions, serve the API")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory holding the snapshot and served files.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["stub", "live"])]
    pub provider_mode: Option<String>,
    /// JSON list of `{match, response}` rules for the stub chat provider.
    #[arg(long, global = true)]
    pub stub_script: Option<PathBuf>,
    #[arg(long, global = true)]
    pub chat_model: Option<String>,
    #[arg(long, global = true)]
    pub embed_model: Option<String>,
    /// PageRank damping factor.
    #[arg(long, global = true)]
    pub damping: Option<f64>,
    /// Notes added by graph expansion beyond the seeds.
    #[arg(long, global = true)]
    pub expansion_top_m: Option<usize>,
    /// Semantic search depth.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true, value_parser = ["heuristic", "provider"])]
    pub router: Option<String>,
    #[arg(long, global = true, value_parser = ["overlap", "provider", "off"])]
    pub rerank: Option<String>,
}

impl GlobalArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            data_dir: self.data_dir.clone(),
            bind: None,
            provider_mode: self.provider_mode.as_deref().map(|m| m.parse().expect("validated by clap")),
            stub_script: self.stub_script.clone(),
            chat_model: self.chat_model.clone(),
            embed_model: self.embed_model.clone(),
            damping: self.damping,
            expansion_top_m: self.expansion_top_m,
            k: self.k,
            router: self.router.as_deref().map(|r| match r {
                "provider" => RouterSetting::Provider,
                _ => RouterSetting::Heuristic,
            }),
            rerank: self.rerank.as_deref().map(|r| match r {
                "provider" => RerankSetting::Provider,
                "off" => RerankSetting::Off,
                _ => RerankSetting::Overlap,
            }),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest a JSON-lines caption fixture as a new stream.
    Ingest { fixture: PathBuf },
    /// Answer a question from memory.
    Ask {
        question: String,
        /// Print the response body as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Write one markdown file per note.
    ExportVault { dir: PathBuf },
    /// Replace the memory with one rebuilt from a vault.
    ImportVault { dir: PathBuf },
    /// Print graph counts.
    Stats {
        #[arg(long)]
        json: bool,
    },
    /// Run a read-only graph query and print the result table.
    Query { text: String },
    /// Print the plan for a graph query.
    Explain { text: String },
    /// Caption a directory of extracted frames into a fixture (live mode).
    Caption {
        frames_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
pub enum Failure {
    User(String),
    Internal(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::User(_) => 1,
            Failure::Internal(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::User(m) | Failure::Internal(m) => m,
        }
    }
}

fn user(e: impl ToString) -> Failure {
    Failure::User(e.to_string())
}

fn internal(e: impl ToString) -> Failure {
    Failure::Internal(e.to_string())
}

fn providers(config: &ServiceConfig) -> Result<Providers, Failure> {
    Providers::from_settings(&config.provider).map_err(|e| match e {
        SetupError::StubScript { .. } => user(e),
        SetupError::Provider(_) => internal(e),
    })
}

fn execute(cli: Cli, env: &dyn Fn(&str) -> Option<String>, out: &mut dyn Write) -> Result<(), Failure> {
    let mut overrides = cli.global.overrides();
    if let Command::Serve { bind: Some(b) } = &cli.command {
        overrides.bind = Some(b.clone());
    }
    let config = ServiceConfig::load(cli.global.config.as_deref(), env, &overrides).map_err(user)?;
    let write = |out: &mut dyn Write, text: &str| out.write_all(text.as_bytes()).map_err(internal);

    match cli.command {
        Command::Ingest { fixture } => {
            let records = load_fixture(&fixture).map_err(user)?;
            let providers = providers(&config)?;
            let mut memory = service::load_memory(&config).map_err(internal)?;
            let report = service::ingest_records(&mut memory, &records, &config, &providers);
            if report.notes_created > 0 {
                save_snapshot(memory.graph(), &config.snapshot_path()).map_err(internal)?;
            }
            let mut text = format!("notes_created {}\nentities_created {}\n", report.notes_created, report.entities_created);
            for e in &report.errors {
                text += &format!("error record {}: {}\n", e.index + 1, e.error);
            }
            write(out, &text)?;
            if !report.errors.is_empty() {
                return Err(user(format!("{} record(s) were not ingested", report.errors.len())));
            }
        }
        Command::Ask { question, json } => {
            let providers = providers(&config)?;
            let memory = service::load_memory(&config).map_err(internal)?;
            let body = service::ask(&memory, &question, &config, &providers).map_err(|e| match e {
                AgentError::EmptyQuestion => user(e),
                _ => internal(e),
            })?;
            if json {
                write(out, &(serde_json::to_string_pretty(&body).map_err(internal)? + "\n"))?;
            } else {
                write(out, &format_answer(&body))?;
            }
        }
        Command::Serve { .. } => {
            let providers = providers(&config)?;
            let state = Arc::new(AppState::open(config, providers).map_err(internal)?);
            let runtime = tokio::runtime::Runtime::new().map_err(internal)?;
            runtime.block_on(service::serve(state)).map_err(internal)?;
        }
        Command::ExportVault { dir } => {
            let memory = service::load_memory(&config).map_err(internal)?;
            let n = export_vault(memory.graph(), &dir).map_err(internal)?;
            write(out, &format!("notes_written {n}\n"))?;
        }
        Command::ImportVault { dir } => {
            if !dir.is_dir() {
                return Err(user(format!("{} is not a directory", dir.display())));
            }
            let providers = providers(&config)?;
            let memory = import_vault(&dir, &*providers.embedder).map_err(user)?;
            save_snapshot(memory.graph(), &config.snapshot_path()).map_err(internal)?;
            write(out, &format!("notes_imported {}\n", memory.graph().stats().note_count))?;
        }
        Command::Stats { json } => {
            let stats = service::load_memory(&config).map_err(internal)?.graph().stats();
            if json {
                write(out, &(serde_json::to_string_pretty(&stats).map_err(internal)? + "\n"))?;
            } else {
                write(out, &format_stats(&stats))?;
            }
        }
        Command::Query { text } => {
            let memory = service::load_memory(&config).map_err(internal)?;
            let eval = run_query(&text, memory.graph()).map_err(user)?;
            let mut s = eval.table.to_string();
            if !s.ends_with('\n') {
                s.push('\n');
            }
            for w in eval.warnings {
                s += &format!("warning: {w}\n");
            }
            write(out, &s)?;
        }
        Command::Explain { text } => {
            let q = parse_query(&text).map_err(user)?;
            let memory = service::load_memory(&config).map_err(internal)?;
            let mut s = explain(&q, Some(memory.graph()));
            if !s.ends_with('\n') {
                s.push('\n');
            }
            write(out, &s)?;
        }
        Command::Caption { frames_dir, out: out_path } => {
            if config.provider.mode != ProviderMode::Live {
                return Err(user("captioning needs live providers (--provider-mode live)"));
            }
            let frames = list_frames(&frames_dir)?;
            let providers = providers(&config)?;
            let mut captioner =
                LiveCaptioner { chat: providers.chat.clone(), model: config.provider.chat_model(), root: frames_dir.clone() };
            let refs: Vec<&str> = frames.iter().map(String::as_str).collect();
            let params = config.perception_params();
            let windows = run_perception(&refs, &params, &mut captioner, &config.provider.retry(), &mut std::thread::sleep)
                .map_err(internal)?;
            let sampled = groundmem_core::perception::sample_frames(refs.len(), params.every_nth);
            let window_list = groundmem_core::perception::make_windows(&sampled, params.window_size).map_err(internal)?;
            let records: Vec<_> = windows
                .into_iter()
                .zip(window_list)
                .map(|(c, w)| {
                    let files = w.frame_indices.iter().map(|&i| frames[i].clone()).collect();
                    record_for_window(c.anchor, c.caption, files, &params)
                })
                .collect();
            std::fs::write(&out_path, to_jsonl(&records)).map_err(internal)?;
            write(out, &format!("captions_written {}\n", records.len()))?;
        }
    }
    Ok(())
}

/// Image files in `dir`, sorted by name.
fn list_frames(dir: &Path) -> Result<Vec<String>, Failure> {
    let entries = std::fs::read_dir(dir).map_err(|e| user(format!("cannot read {}: {e}", dir.display())))?;
    let mut frames: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| {
            let lower = n.to_ascii_lowercase();
            [".jpg", ".jpeg", ".png", ".webp"].iter().any(|ext| lower.ends_with(ext))
        })
        .collect();
    frames.sort();
    Ok(frames)
}

/// Parses `args` (program name first) and runs the command.
pub fn run(
    args: impl IntoIterator<Item = OsString>,
    env: &dyn Fn(&str) -> Option<String>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli, env, out) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            f.code()
        }
    }
}

pub fn main() -> i32 {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("MEM_LOG").unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let env = |k: &str| std::env::var(k).ok();
    run(std::env::args_os(), &env, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

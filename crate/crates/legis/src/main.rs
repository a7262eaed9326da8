//! `legis` command line.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |---|---|
//! | 0 | success |
//! | 1 | runtime failure (provider, storage, a failed run) |
//! | 2 | usage or configuration error, including a missing fixture directory |
//!
//! Settings come from flags, then `LEGIS_*` environment variables, then the
//! TOML config file. Credentials are read only from `AGENT_PROVIDER_TOKEN`,
//! `CONGRESS_API_KEY` and `ARCHIVE_API_KEY`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use legis::app::{series_dirs, App, AppConfig, AppError, FileConfig};
use legis::ingest::{self, DEFAULT_BATCH_SIZE};
use legis::pipeline::{series_csv, series_svg};
use legis_core::agent::{run_turn, Conversation, OutcomeKind};
use legis_core::pipeline::{RunOptions, RunState};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "legis", version, about = "Legislative research agent and gridlock pipeline")]
struct Cli {
    /// Print errors to stderr as JSON objects.
    #[arg(long, global = true)]
    json: bool,
    /// TOML config file.
    #[arg(long, global = true, env = "LEGIS_CONFIG")]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Settings {
    /// Where runs, traces and stores persist.
    #[arg(long, global = true, env = "LEGIS_DATA_DIR")]
    data_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "LEGIS_PROVIDER_URL")]
    provider_url: Option<String>,
    #[arg(long, global = true, env = "LEGIS_MODEL")]
    model: Option<String>,
    #[arg(long, global = true, env = "LEGIS_EMBEDDING_MODEL")]
    embedding_model: Option<String>,
    #[arg(long, global = true, env = "LEGIS_DIMENSION")]
    dimension: Option<usize>,
    #[arg(long, global = true, env = "LEGIS_CONGRESS_API_URL")]
    congress_api_url: Option<String>,
    #[arg(long, global = true, env = "LEGIS_ARCHIVE_API_URL")]
    archive_api_url: Option<String>,
    #[arg(long, global = true, env = "LEGIS_TIMEOUT_SECS")]
    timeout_secs: Option<u64>,
    #[arg(long, global = true, env = "LEGIS_PROMPT_DIR")]
    prompt_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Start the HTTP API.
    Serve {
        #[arg(long, env = "LEGIS_PORT")]
        port: Option<u16>,
        #[arg(long, env = "LEGIS_CORS_ORIGIN")]
        cors_origin: Option<String>,
        /// Serve from fixture directories instead of live services.
        #[arg(long)]
        cassette: Vec<PathBuf>,
    },
    /// Load data into the stores.
    #[command(subcommand)]
    Ingest(IngestCommand),
    /// Run the gridlock pipeline for one Congress.
    Run {
        #[arg(long)]
        congress: u32,
        /// Finalize without waiting for review.
        #[arg(long)]
        no_review: bool,
        /// Replay from a fixture directory.
        #[arg(long)]
        cassette: Option<PathBuf>,
        /// Route status checks through agent turns.
        #[arg(long)]
        agent_checks: bool,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Replay a range of Congresses and print the gridlock series.
    Series {
        #[arg(long)]
        from: u32,
        #[arg(long)]
        to: u32,
        #[arg(long, value_enum, default_value_t = OutFormat::Csv)]
        out: OutFormat,
        /// Directory holding one fixture directory per Congress.
        #[arg(long, default_value = "fixtures")]
        cassettes: PathBuf,
        /// Write here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Export traces.
    #[command(subcommand)]
    Trace(TraceCommand),
    /// One agent turn against the configured provider.
    Ask {
        prompt: String,
        /// Replay from a fixture directory.
        #[arg(long)]
        cassette: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum IngestCommand {
    /// Bill summaries (JSON lines), optionally with a bill-status CSV.
    Bills {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        status: Option<PathBuf>,
        #[arg(long)]
        from_congress: Option<u32>,
        #[arg(long)]
        to_congress: Option<u32>,
        #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
        batch_size: usize,
    },
    /// Article archives fetched month by month, `YYYY-MM` bounds inclusive.
    Articles {
        #[arg(long, value_parser = parse_month)]
        from: (u32, u32),
        #[arg(long, value_parser = parse_month)]
        to: (u32, u32),
        #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
        batch_size: usize,
    },
    /// Member CSV tables from a directory.
    Tables {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum TraceCommand {
    Export {
        #[arg(long)]
        run: String,
        #[arg(long, value_enum, default_value_t = TraceFormat::Jsonl)]
        format: TraceFormat,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Svg,
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceFormat {
    Jsonl,
    Html,
}

fn parse_month(s: &str) -> Result<(u32, u32), String> {
    let (y, m) = s.split_once('-').ok_or("expected YYYY-MM")?;
    let y: u32 = y.parse().map_err(|_| "bad year")?;
    let m: u32 = m.parse().map_err(|_| "bad month")?;
    if !(1..=12).contains(&m) {
        return Err("month must be 1-12".into());
    }
    Ok((y, m))
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    App(#[from] AppError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::App(e) if e.is_usage() => 2,
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    fn kind(&self) -> &'static str {
        if self.code() == 2 {
            "usage"
        } else {
            "runtime"
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn config(cli: &Cli, port: Option<u16>, cors_origin: Option<String>) -> Result<AppConfig, CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let s = &cli.settings;
    let flags = FileConfig {
        data_dir: s.data_dir.clone(),
        port,
        provider_url: s.provider_url.clone(),
        model: s.model.clone(),
        embedding_model: s.embedding_model.clone(),
        dimension: s.dimension,
        congress_api_url: s.congress_api_url.clone(),
        archive_api_url: s.archive_api_url.clone(),
        cors_origin,
        timeout_secs: s.timeout_secs,
        prompt_dir: s.prompt_dir.clone(),
        ..FileConfig::default()
    };
    Ok(AppConfig::resolve(flags.or(file)))
}

fn emit(line: Value) {
    eprintln!("{line}");
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| runtime(format!("{}: {e}", p.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(runtime),
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Serve {
            port,
            cors_origin,
            cassette,
        } => {
            let cfg = config(cli, *port, cors_origin.clone())?;
            let port = cfg.port;
            let app = if cassette.is_empty() {
                App::live(cfg)?
            } else {
                App::replay(cfg, cassette)?
            };
            let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
            rt.block_on(legis::server::serve(Arc::new(app), port)).map_err(runtime)
        }
        Command::Ingest(cmd) => ingest_command(cli, cmd),
        Command::Run {
            congress,
            no_review,
            cassette,
            agent_checks,
            threshold,
            top_k,
        } => {
            let cfg = config(cli, None, None)?;
            let app = match cassette {
                Some(dir) => App::replay(cfg, std::slice::from_ref(dir))?,
                None => App::live(cfg)?,
            };
            let mut options = RunOptions {
                no_review: *no_review,
                agent_checks: *agent_checks,
                ..RunOptions::default()
            };
            if let Some(t) = threshold {
                options.threshold = *t;
            }
            if let Some(k) = top_k {
                options.top_k = *k;
            }
            let run = app.engine.create_run(*congress, options).map_err(|e| match e {
                legis::pipeline::PipelineError::Invalid { .. } => CliError::Usage(e.to_string()),
                e => runtime(e),
            })?;
            let run = app.engine.execute(&run.run_id).map_err(runtime)?;
            for w in &run.warnings {
                emit(json!({"event": "warning", "run_id": run.run_id, "message": w}));
            }
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&run).map_err(runtime)?);
            } else {
                println!("run {}", run.run_id);
                println!("state {}", run.state);
                if let Some(r) = &run.result {
                    println!("gridlocked {}/{}", r.gridlocked_clusters, r.total_clusters());
                    println!("score {:.2}", r.score);
                }
            }
            match run.state {
                RunState::Failed => Err(runtime(run.error.unwrap_or_else(|| "run failed".into()))),
                _ => Ok(()),
            }
        }
        Command::Series {
            from,
            to,
            out,
            cassettes,
            output,
        } => {
            if to < from {
                return Err(CliError::Usage("--to must not be less than --from".into()));
            }
            let dirs = series_dirs(cassettes, *from, *to)?;
            let app = App::replay(config(cli, None, None)?, &dirs)?;
            let options = RunOptions {
                no_review: true,
                ..RunOptions::default()
            };
            let entries = app.engine.run_series(*from, *to, &options);
            let mut scores = Vec::new();
            for e in &entries {
                match (e.score, &e.error) {
                    (Some(s), None) => scores.push((e.congress, s)),
                    _ => emit(json!({"event": "congress_failed", "congress": e.congress, "run_id": e.run_id, "error": e.error})),
                }
            }
            let text = match out {
                OutFormat::Csv => series_csv(&scores),
                OutFormat::Svg => series_svg(&scores),
            };
            write_out(output.as_deref(), &text)?;
            if scores.is_empty() {
                Err(runtime("every Congress in the series failed"))
            } else {
                Ok(())
            }
        }
        Command::Trace(TraceCommand::Export { run, format }) => {
            let cfg = config(cli, None, None)?;
            let dir = cfg.data_dir.clone().unwrap_or_else(|| PathBuf::from("data"));
            let store = legis::trace_store::TraceStore::open(dir.join("traces")).map_err(runtime)?;
            let text = match format {
                TraceFormat::Jsonl => store.export_jsonl(run),
                TraceFormat::Html => store.export_html(run),
            }
            .map_err(runtime)?;
            write_out(None, &text)
        }
        Command::Ask { prompt, cassette } => {
            let cfg = config(cli, None, None)?;
            let app = match cassette {
                Some(dir) => App::replay(cfg, std::slice::from_ref(dir))?,
                None => App::live(cfg)?,
            };
            let provider = app.providers.provider(None).map_err(runtime)?;
            let id = uuid::Uuid::new_v4().to_string();
            app.trace.create_scope(&id).map_err(runtime)?;
            let mut conv = Conversation::new(id.clone(), app.engine.prompts.system.clone());
            let outcome = run_turn(&mut conv, prompt, &app.registry, provider.as_ref(), app.engine.turn, app.trace.as_ref())
                .map_err(runtime)?;
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&outcome).map_err(runtime)?);
            } else {
                println!("{}", outcome.final_text);
            }
            match outcome.kind {
                OutcomeKind::Answered => Ok(()),
                OutcomeKind::IterationLimit => Err(runtime(format!(
                    "iteration limit reached after {} iterations (session {id})",
                    outcome.iterations_used
                ))),
                OutcomeKind::ProviderError => Err(runtime(outcome.error.unwrap_or_else(|| "provider error".into()))),
            }
        }
    }
}

fn ingest_command(cli: &Cli, cmd: &IngestCommand) -> Result<(), CliError> {
    let app = App::live(config(cli, None, None)?)?;
    let mut progress = |v: Value| println!("{v}");
    let summary = match cmd {
        IngestCommand::Bills {
            file,
            status,
            from_congress,
            to_congress,
            batch_size,
        } => {
            let range = match (from_congress, to_congress) {
                (None, None) => None,
                (a, b) => Some(a.unwrap_or(1)..=b.unwrap_or(u32::MAX)),
            };
            let mut out = json!({});
            if let Some(s) = status {
                let r = ingest::ingest_bill_status(&app.relational, s, &mut progress).map_err(runtime)?;
                out["status_rows"] = json!(r.rows);
                out["unknown_markers"] = json!(r.unknown_markers);
            }
            let r = ingest::ingest_bill_summaries(&app.vectors, app.embedder.as_ref(), file, range, *batch_size, &mut progress)
                .map_err(runtime)?;
            out["bills_embedded"] = json!(r.embedded);
            out["skipped"] = json!(r.skipped);
            out
        }
        IngestCommand::Articles { from, to, batch_size } => {
            let months = ingest::month_range(*from, *to);
            if months.is_empty() {
                return Err(CliError::Usage("--to is before --from".into()));
            }
            let r = ingest::ingest_articles(&app.vectors, app.embedder.as_ref(), &app.archive, &months, *batch_size, &mut progress)
                .map_err(runtime)?;
            json!({"articles_embedded": r.embedded, "duplicates": r.duplicates, "skipped": r.skipped})
        }
        IngestCommand::Tables { dir } => {
            let counts = ingest::ingest_tables(&app.relational, dir, &mut progress).map_err(runtime)?;
            json!({ "rows": counts })
        }
    };
    println!("{}", json!({"event": "done", "summary": summary}));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if cli.json {
                eprintln!("{}", json!({"error": {"kind": e.kind(), "code": e.code(), "message": e.to_string()}}));
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.code())
        }
    }
}

//! Configuration and wiring of stores, clients, tools and the pipeline engine.
//!
//! Two assemblies exist: [`App::live`] talks to real services, and
//! [`App::replay`] loads committed fixture directories (recorded agent steps,
//! recorded embeddings, HTTP cassettes) so runs are deterministic and offline.
//!
//! A fixture directory holds:
//!
//! | file | content |
//! |---|---|
//! | `manifest.json` | `{"congress": 113, "dimension": 32}` |
//! | `agent.jsonl` | scripted provider steps for runs of that Congress |
//! | `embeddings.jsonl` | `{"text", "vector"}` recordings |
//! | `bills.jsonl` | bill summary records |
//! | `articles.jsonl` | archive articles with `year` and `month` |
//! | `bill_status.csv` | `bill_id,status` markers |
//!
//! `tables/` (member CSVs), `http/` (cassettes) and `session.jsonl` (scripted
//! chat for sessions) are looked up in the fixture directory and its parent.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use legis_core::agent::{ToolRegistry, TurnConfig};
use legis_core::embed::Embedder;
use serde::{Deserialize, Serialize};

use crate::apis::{ApiCore, ArchiveArticle, ArchiveClient, CongressClient, UnavailableWebSearch, ARCHIVE_KEY_VAR, CONGRESS_KEY_VAR};
use crate::http::{CassetteTransport, LiveTransport, RateLimiter, ThreadSleeper, Transport};
use crate::ingest::{self, IngestError, DEFAULT_BATCH_SIZE};
use crate::pipeline::{Engine, PipelineError, ProviderFactory, RunStore, ScriptFactory, SharedProvider};
use crate::prompts::Prompts;
use crate::providers::{HttpChatProvider, HttpEmbedder, RecordedEmbedder, RecordingError, PROVIDER_TOKEN_VAR};
use crate::relational::{RelationalError, RelationalStore};
use crate::tools::{build_registry, ToolContext, ToolOptions};
use crate::trace_store::{TraceStore, TraceStoreError};
use crate::vector_store::{StoreError, VectorStore};

/// Settings from the config file. Every field is optional there; flags and
/// environment variables override it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub data_dir: Option<PathBuf>,
    pub port: Option<u16>,
    pub provider_url: Option<String>,
    pub model: Option<String>,
    pub embedding_model: Option<String>,
    pub dimension: Option<usize>,
    pub congress_api_url: Option<String>,
    pub archive_api_url: Option<String>,
    pub archive_requests_per_minute: Option<u32>,
    pub cors_origin: Option<String>,
    pub timeout_secs: Option<u64>,
    pub prompt_dir: Option<PathBuf>,
    pub web_search: Option<bool>,
    pub free_sql: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))
    }

    /// Fills every unset field of `self` from `fallback`.
    pub fn or(self, fallback: FileConfig) -> FileConfig {
        FileConfig {
            data_dir: self.data_dir.or(fallback.data_dir),
            port: self.port.or(fallback.port),
            provider_url: self.provider_url.or(fallback.provider_url),
            model: self.model.or(fallback.model),
            embedding_model: self.embedding_model.or(fallback.embedding_model),
            dimension: self.dimension.or(fallback.dimension),
            congress_api_url: self.congress_api_url.or(fallback.congress_api_url),
            archive_api_url: self.archive_api_url.or(fallback.archive_api_url),
            archive_requests_per_minute: self.archive_requests_per_minute.or(fallback.archive_requests_per_minute),
            cors_origin: self.cors_origin.or(fallback.cors_origin),
            timeout_secs: self.timeout_secs.or(fallback.timeout_secs),
            prompt_dir: self.prompt_dir.or(fallback.prompt_dir),
            web_search: self.web_search.or(fallback.web_search),
            free_sql: self.free_sql.or(fallback.free_sql),
        }
    }
}

/// Resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct AppConfig {
    /// Where vectors, tables, runs and traces persist; `None` keeps everything in memory.
    pub data_dir: Option<PathBuf>,
    pub port: u16,
    pub provider_url: String,
    pub model: String,
    pub embedding_model: String,
    pub dimension: usize,
    pub congress_api_url: String,
    pub archive_api_url: String,
    pub archive_requests_per_minute: u32,
    pub cors_origin: String,
    pub timeout: Duration,
    pub prompt_dir: Option<PathBuf>,
    pub tools: ToolOptions,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig::resolve(FileConfig::default())
    }
}

impl AppConfig {
    pub fn resolve(f: FileConfig) -> Self {
        AppConfig {
            data_dir: f.data_dir.or_else(|| Some(PathBuf::from("data"))),
            port: f.port.unwrap_or(8080),
            provider_url: f.provider_url.unwrap_or_else(|| "https://api.openai.com/v1".into()),
            model: f.model.unwrap_or_else(|| "gpt-4o".into()),
            embedding_model: f.embedding_model.unwrap_or_else(|| "text-embedding-3-small".into()),
            dimension: f.dimension.unwrap_or(1536),
            congress_api_url: f.congress_api_url.unwrap_or_else(|| "https://api.congress.gov/v3".into()),
            archive_api_url: f.archive_api_url.unwrap_or_else(|| "https://api.nytimes.com".into()),
            archive_requests_per_minute: f.archive_requests_per_minute.unwrap_or(5),
            cors_origin: f.cors_origin.unwrap_or_else(|| "http://localhost:5173".into()),
            timeout: Duration::from_secs(f.timeout_secs.unwrap_or(30)),
            prompt_dir: f.prompt_dir,
            tools: ToolOptions {
                web_search: f.web_search.unwrap_or(false),
                free_sql: f.free_sql.unwrap_or(false),
            },
        }
    }

    fn prompts(&self) -> Result<Prompts, AppError> {
        match &self.prompt_dir {
            Some(dir) => Prompts::load_dir(dir, crate::prompts::PROMPT_VERSION)
                .map_err(|e| AppError::Config(format!("prompt directory {}: {e}", dir.display()))),
            None => Ok(Prompts::default()),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("fixture directory {path}: {message}")]
    Fixture { path: PathBuf, message: String },
    #[error(transparent)]
    Vector(#[from] StoreError),
    #[error(transparent)]
    Relational(#[from] RelationalError),
    #[error(transparent)]
    Trace(#[from] TraceStoreError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Recording(#[from] RecordingError),
}

impl AppError {
    /// Setup problems the user must fix, as opposed to runtime failures.
    pub fn is_usage(&self) -> bool {
        matches!(self, AppError::Config(_) | AppError::Fixture { .. })
    }
}

pub struct App {
    pub config: AppConfig,
    pub vectors: Arc<VectorStore>,
    pub relational: Arc<RelationalStore>,
    pub embedder: Arc<dyn Embedder>,
    pub congress: Arc<CongressClient>,
    pub archive: Arc<ArchiveClient>,
    pub registry: Arc<ToolRegistry>,
    pub trace: Arc<TraceStore>,
    pub runs: Arc<RunStore>,
    pub providers: Arc<dyn ProviderFactory>,
    pub engine: Arc<Engine>,
}

fn env_secret(var: &str) -> Option<String> {
    std::env::var(var).ok().filter(|v| !v.is_empty())
}

fn open_persistence(config: &AppConfig) -> Result<(Arc<TraceStore>, Arc<RunStore>), AppError> {
    Ok(match &config.data_dir {
        Some(d) => (
            Arc::new(TraceStore::open(d.join("traces"))?),
            Arc::new(RunStore::open(d.join("runs"))?),
        ),
        None => (Arc::new(TraceStore::in_memory()), Arc::new(RunStore::in_memory())),
    })
}

struct Parts {
    vectors: Arc<VectorStore>,
    relational: Arc<RelationalStore>,
    embedder: Arc<dyn Embedder>,
    congress: Arc<CongressClient>,
    archive: Arc<ArchiveClient>,
    providers: Arc<dyn ProviderFactory>,
}

fn assemble(config: AppConfig, p: Parts) -> Result<App, AppError> {
    let (trace, runs) = open_persistence(&config)?;
    let ctx = Arc::new(ToolContext {
        vectors: p.vectors.clone(),
        relational: p.relational.clone(),
        embedder: p.embedder.clone(),
        congress: p.congress.clone(),
        web: Arc::new(UnavailableWebSearch),
    });
    let registry = Arc::new(build_registry(ctx, config.tools).map_err(|e| AppError::Config(e.to_string()))?);
    let mut engine = Engine::new(registry.clone(), p.providers.clone(), trace.clone(), runs.clone());
    engine.prompts = config.prompts()?;
    engine.turn = TurnConfig::default();
    Ok(App {
        vectors: p.vectors,
        relational: p.relational,
        embedder: p.embedder,
        congress: p.congress,
        archive: p.archive,
        registry,
        trace,
        runs,
        providers: p.providers,
        engine: Arc::new(engine),
        config,
    })
}

impl App {
    /// Real HTTP clients; stores persist under the data directory.
    pub fn live(config: AppConfig) -> Result<App, AppError> {
        let live = |url: &str| -> Result<Arc<dyn Transport>, AppError> {
            Ok(Arc::new(
                LiveTransport::new(url, config.timeout).map_err(|e| AppError::Config(e.to_string()))?,
            ))
        };
        let sleeper = Arc::new(ThreadSleeper);
        let (vectors, relational) = match &config.data_dir {
            Some(d) => {
                std::fs::create_dir_all(d).map_err(|e| AppError::Config(format!("{}: {e}", d.display())))?;
                (
                    VectorStore::open(d.join("vectors.avec"), config.dimension)?,
                    RelationalStore::open(&d.join("tables.sqlite").to_string_lossy())?,
                )
            }
            None => (VectorStore::in_memory(config.dimension), RelationalStore::in_memory()),
        };
        let relational = relational.with_free_sql(config.tools.free_sql);
        let provider_transport = live(&config.provider_url)?;
        let token = env_secret(PROVIDER_TOKEN_VAR);
        let chat = HttpChatProvider::new(provider_transport.clone(), config.model.clone(), token.clone(), sleeper.clone());
        let embedder = HttpEmbedder::new(
            provider_transport,
            config.embedding_model.clone(),
            config.dimension,
            token,
            sleeper.clone(),
        );
        let congress = ApiCore::new(
            live(&config.congress_api_url)?,
            true,
            env_secret(CONGRESS_KEY_VAR),
            CONGRESS_KEY_VAR,
            sleeper.clone(),
        );
        let archive = ApiCore::new(
            live(&config.archive_api_url)?,
            true,
            env_secret(ARCHIVE_KEY_VAR),
            ARCHIVE_KEY_VAR,
            sleeper,
        )
        .with_limiter(Arc::new(RateLimiter::per_minute(config.archive_requests_per_minute)));
        let parts = Parts {
            vectors: Arc::new(vectors),
            relational: Arc::new(relational),
            embedder: Arc::new(embedder),
            congress: Arc::new(CongressClient::new(congress)),
            archive: Arc::new(ArchiveClient::new(archive)),
            providers: Arc::new(SharedProvider(Arc::new(chat))),
        };
        assemble(config, parts)
    }

    /// Loads fixture directories into in-memory stores with recorded providers.
    pub fn replay(config: AppConfig, dirs: &[PathBuf]) -> Result<App, AppError> {
        if dirs.is_empty() {
            return Err(AppError::Config("no fixture directories given".into()));
        }
        let mut manifests = Vec::new();
        for d in dirs {
            manifests.push((d.clone(), Manifest::load(d)?));
        }
        let dimension = manifests[0].1.dimension;
        if let Some((d, m)) = manifests.iter().find(|(_, m)| m.dimension != dimension) {
            return Err(AppError::Fixture {
                path: d.clone(),
                message: format!("dimension {} differs from {dimension}", m.dimension),
            });
        }
        let mut embedder = RecordedEmbedder::new(dimension);
        let mut scripts = ScriptFactory::default();
        for (d, m) in &manifests {
            let emb = d.join("embeddings.jsonl");
            if emb.exists() {
                embedder.load(&emb)?;
            }
            let agent = d.join("agent.jsonl");
            if agent.exists() {
                scripts.by_congress.insert(m.congress, agent);
            }
            if scripts.session.is_none() {
                scripts.session = find_near(d, "session.jsonl");
            }
        }
        let embedder = Arc::new(embedder);
        let vectors = Arc::new(VectorStore::in_memory(dimension));
        let relational = RelationalStore::in_memory().with_free_sql(config.tools.free_sql);
        let mut quiet = |_| {};
        if let Some(tables) = find_near(&dirs[0], "tables") {
            ingest::ingest_tables(&relational, &tables, &mut quiet)?;
        }
        for (d, _) in &manifests {
            let status = d.join("bill_status.csv");
            if status.exists() {
                ingest::ingest_bill_status(&relational, &status, &mut quiet)?;
            }
            let bills = d.join("bills.jsonl");
            if bills.exists() {
                ingest::ingest_bill_summaries(&vectors, embedder.as_ref(), &bills, None, DEFAULT_BATCH_SIZE, &mut quiet)?;
            }
            let articles = d.join("articles.jsonl");
            if articles.exists() {
                let months = read_article_fixture(&articles)?;
                ingest::ingest_article_records(&vectors, embedder.as_ref(), months, DEFAULT_BATCH_SIZE, &mut quiet)?;
            }
        }
        let http = find_near(&dirs[0], "http").unwrap_or_else(|| dirs[0].join("http"));
        let transport: Arc<dyn Transport> = Arc::new(CassetteTransport::new(http));
        let sleeper = Arc::new(ThreadSleeper);
        let congress = ApiCore::new(transport.clone(), false, None, CONGRESS_KEY_VAR, sleeper.clone());
        let archive = ApiCore::new(transport, false, None, ARCHIVE_KEY_VAR, sleeper);
        let parts = Parts {
            vectors,
            relational: Arc::new(relational),
            embedder,
            congress: Arc::new(CongressClient::new(congress)),
            archive: Arc::new(ArchiveClient::new(archive)),
            providers: Arc::new(scripts),
        };
        assemble(config, parts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub congress: u32,
    pub dimension: usize,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, AppError> {
        let fixture = |message: String| AppError::Fixture {
            path: dir.to_path_buf(),
            message,
        };
        if !dir.is_dir() {
            return Err(fixture("directory does not exist".into()));
        }
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| fixture(format!("manifest.json: {e}")))?;
        serde_json::from_str(&text).map_err(|e| fixture(format!("manifest.json: {e}")))
    }
}

fn find_near(dir: &Path, name: &str) -> Option<PathBuf> {
    [Some(dir), dir.parent()]
        .into_iter()
        .flatten()
        .map(|d| d.join(name))
        .find(|p| p.exists())
}

#[derive(Deserialize)]
struct ArticleLine {
    year: u32,
    month: u32,
    #[serde(flatten)]
    article: ArchiveArticle,
}

fn read_article_fixture(path: &Path) -> Result<Vec<((u32, u32), Vec<ArchiveArticle>)>, AppError> {
    let bad = |message: String| AppError::Fixture {
        path: path.to_path_buf(),
        message,
    };
    let file = std::fs::File::open(path).map_err(|e| bad(e.to_string()))?;
    let mut months: BTreeMap<(u32, u32), Vec<ArchiveArticle>> = BTreeMap::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let a: ArticleLine = serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", i + 1)))?;
        months.entry((a.year, a.month)).or_default().push(a.article);
    }
    Ok(months.into_iter().collect())
}

/// Fixture directories `<root>/<congress>` for every Congress in the range.
pub fn series_dirs(root: &Path, from: u32, to: u32) -> Result<Vec<PathBuf>, AppError> {
    (from..=to)
        .map(|c| {
            let d = root.join(c.to_string());
            if d.is_dir() {
                Ok(d)
            } else {
                Err(AppError::Fixture {
                    path: d,
                    message: "directory does not exist".into(),
                })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_fill_gaps_only() {
        let flags = FileConfig {
            port: Some(9000),
            ..FileConfig::default()
        };
        let file: FileConfig = toml::from_str("port = 7000\nmodel = \"m\"\n").unwrap();
        let c = AppConfig::resolve(flags.or(file));
        assert_eq!(c.port, 9000);
        assert_eq!(c.model, "m");
        assert_eq!(c.archive_requests_per_minute, 5);
        assert!(toml::from_str::<FileConfig>("bogus = 1").is_err());
    }

    #[test]
    fn missing_fixture_dir_is_usage_error() {
        let err = App::replay(AppConfig::default(), &[PathBuf::from("/nonexistent/116")]).err().unwrap();
        assert!(err.is_usage());
        assert!(err.to_string().contains("/nonexistent/116"));
    }
}

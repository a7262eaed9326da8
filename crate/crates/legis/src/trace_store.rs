//! Append-only trace log: one JSONL file per scope under a directory.
//!
//! Event line schema (`"v": 1`):
//!
//! ```text
//! {"v":1,"seq":N,"timestamp":"<RFC 3339 UTC>","scope_id":"...","kind":"tool_call",
//!  "payload":{...},"latency_ms":12}
//! ```
//!
//! `seq` starts at 1 and increases by one per scope. `latency_ms` is omitted
//! when unknown. Payloads above 64 KiB are trimmed and carry `"truncated": true`.
//! Every append is flushed and synced before `record` returns.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use legis_core::agent::truncate_payload;
use legis_core::report::{compute_gridlock, BillMatch, ClusterWork, GridlockError, GridlockResult, PolicyCluster, ReviewOverride, UNKNOWN_STATUS};
use legis_core::trace::{TraceError, TraceKind, TraceSink, TRACE_SCHEMA_VERSION};
use legis_core::BillId;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Largest payload stored verbatim.
pub const PAYLOAD_LIMIT: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub v: u32,
    pub seq: u64,
    pub timestamp: String,
    pub scope_id: String,
    pub kind: TraceKind,
    pub payload: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceStoreError {
    #[error("trace scope {0:?} not found")]
    NotFound(String),
    #[error("invalid trace scope id {0:?}")]
    InvalidScope(String),
    #[error("trace file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("trace scope {scope:?} line {line}: {message}")]
    Corrupt { scope: String, line: usize, message: String },
}

impl From<TraceStoreError> for TraceError {
    fn from(e: TraceStoreError) -> Self {
        match e {
            TraceStoreError::NotFound(s) => TraceError::UnknownScope(s),
            TraceStoreError::InvalidScope(s) => TraceError::InvalidScope(s),
            other => TraceError::Storage(other.to_string()),
        }
    }
}

/// Scope ids become file names, so they are restricted to a safe alphabet.
pub fn valid_scope_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

enum Backing {
    File { file: File, path: PathBuf },
    Memory(String),
}

struct ScopeLog {
    next_seq: u64,
    backing: Backing,
}

impl ScopeLog {
    fn contents(&mut self) -> Result<String, TraceStoreError> {
        match &mut self.backing {
            Backing::Memory(s) => Ok(s.clone()),
            Backing::File { path, .. } => std::fs::read_to_string(&*path).map_err(|source| TraceStoreError::Io {
                path: path.clone(),
                source,
            }),
        }
    }
}

pub struct TraceStore {
    dir: Option<PathBuf>,
    scopes: RwLock<HashMap<String, Arc<Mutex<ScopeLog>>>>,
    started: Instant,
}

impl TraceStore {
    /// A store whose events live only in memory.
    pub fn in_memory() -> Self {
        TraceStore {
            dir: None,
            scopes: RwLock::new(HashMap::new()),
            started: Instant::now(),
        }
    }

    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, TraceStoreError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|source| TraceStoreError::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(TraceStore {
            dir: Some(dir),
            scopes: RwLock::new(HashMap::new()),
            started: Instant::now(),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn file_path(&self, scope: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{scope}.jsonl")))
    }

    /// Creates `scope` if needed. Existing scopes are left untouched so a
    /// resumed run keeps appending after its last event.
    pub fn create_scope(&self, scope: &str) -> Result<(), TraceStoreError> {
        if !valid_scope_id(scope) {
            return Err(TraceStoreError::InvalidScope(scope.into()));
        }
        let mut scopes = self.scopes.write().unwrap_or_else(|p| p.into_inner());
        if scopes.contains_key(scope) {
            return Ok(());
        }
        let log = match self.file_path(scope) {
            Some(path) => open_file_log(scope, path)?,
            None => ScopeLog {
                next_seq: 1,
                backing: Backing::Memory(String::new()),
            },
        };
        scopes.insert(scope.into(), Arc::new(Mutex::new(log)));
        Ok(())
    }

    pub fn scope_exists(&self, scope: &str) -> bool {
        self.handle(scope).is_ok()
    }

    fn handle(&self, scope: &str) -> Result<Arc<Mutex<ScopeLog>>, TraceStoreError> {
        if !valid_scope_id(scope) {
            return Err(TraceStoreError::InvalidScope(scope.into()));
        }
        if let Some(h) = self.scopes.read().unwrap_or_else(|p| p.into_inner()).get(scope) {
            return Ok(h.clone());
        }
        // A scope written by an earlier process exists on disk only.
        match self.file_path(scope) {
            Some(path) if path.exists() => {
                self.create_scope(scope)?;
                self.handle(scope)
            }
            _ => Err(TraceStoreError::NotFound(scope.into())),
        }
    }

    pub fn append(&self, scope: &str, kind: TraceKind, payload: Value, latency_ms: Option<u64>) -> Result<u64, TraceStoreError> {
        let handle = self.handle(scope)?;
        let mut log = handle.lock().unwrap_or_else(|p| p.into_inner());
        let (payload, _) = truncate_payload(&payload, PAYLOAD_LIMIT);
        let event = TraceEvent {
            v: TRACE_SCHEMA_VERSION,
            seq: log.next_seq,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            scope_id: scope.into(),
            kind,
            payload,
            latency_ms,
        };
        let mut line = serde_json::to_string(&event).map_err(|e| TraceStoreError::Corrupt {
            scope: scope.into(),
            line: 0,
            message: e.to_string(),
        })?;
        line.push('\n');
        match &mut log.backing {
            Backing::Memory(s) => s.push_str(&line),
            Backing::File { file, path } => {
                let io = |source| TraceStoreError::Io {
                    path: path.clone(),
                    source,
                };
                file.write_all(line.as_bytes()).map_err(io)?;
                file.sync_data().map_err(io)?;
            }
        }
        log.next_seq += 1;
        Ok(event.seq)
    }

    pub fn read_events(&self, scope: &str) -> Result<Vec<TraceEvent>, TraceStoreError> {
        parse_events(scope, &self.export_jsonl(scope)?)
    }

    /// The scope's events, one per line, in seq order.
    pub fn export_jsonl(&self, scope: &str) -> Result<String, TraceStoreError> {
        let handle = self.handle(scope)?;
        let mut log = handle.lock().unwrap_or_else(|p| p.into_inner());
        log.contents()
    }

    pub fn export_html(&self, scope: &str) -> Result<String, TraceStoreError> {
        Ok(render_html(scope, &self.read_events(scope)?))
    }
}

fn open_file_log(scope: &str, path: PathBuf) -> Result<ScopeLog, TraceStoreError> {
    let io = |source| TraceStoreError::Io {
        path: path.clone(),
        source,
    };
    let mut file = OpenOptions::new().create(true).read(true).append(true).open(&path).map_err(io)?;
    let mut text = String::new();
    file.read_to_string(&mut text).map_err(io)?;
    // Drop a torn final line left by a crash mid-append.
    let complete = text.rfind('\n').map_or(0, |i| i + 1);
    if complete < text.len() {
        file.set_len(complete as u64).map_err(io)?;
        file.seek(SeekFrom::End(0)).map_err(io)?;
        text.truncate(complete);
    }
    let last = parse_events(scope, &text)?.last().map_or(0, |e| e.seq);
    Ok(ScopeLog {
        next_seq: last + 1,
        backing: Backing::File { file, path },
    })
}

pub fn parse_events(scope: &str, jsonl: &str) -> Result<Vec<TraceEvent>, TraceStoreError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(jsonl.as_bytes()).lines().enumerate() {
        let line = line.map_err(|e| TraceStoreError::Corrupt {
            scope: scope.into(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| TraceStoreError::Corrupt {
            scope: scope.into(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

impl TraceSink for TraceStore {
    fn record(&self, scope: &str, kind: TraceKind, payload: Value, latency_ms: Option<u64>) -> Result<u64, TraceError> {
        Ok(self.append(scope, kind, payload, latency_ms)?)
    }

    fn now_ms(&self) -> Option<u64> {
        Some(self.started.elapsed().as_millis() as u64)
    }
}

// Payloads the pipeline writes and re-derivation reads back.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepBoundary {
    pub step: u8,
    pub congress: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clusters: Vec<PolicyCluster>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub bill_id: BillId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRecord {
    pub cluster: String,
    pub query: String,
    pub congress: u32,
    pub threshold: f64,
    pub top_k: usize,
    pub hits: Vec<RetrievalHit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideRecord {
    pub cluster: String,
    pub actor: String,
    pub timestamp: String,
    #[serde(flatten)]
    pub review: ReviewOverride,
}

/// Error event marking a cluster whose retrieval failed for good.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFailure {
    pub source: String,
    pub cluster: String,
    pub message: String,
}

/// Result payload of `get_bill_status`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusPayload {
    pub bill_id: BillId,
    pub enacted: bool,
    pub status: String,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RederiveError {
    #[error("trace has no step 1 boundary")]
    NoClusters,
    #[error("event {seq}: {message}")]
    BadEvent { seq: u64, message: String },
    #[error("retrieval for unknown cluster {0:?}")]
    UnknownCluster(String),
    #[error(transparent)]
    Gridlock(#[from] GridlockError),
}

/// Rebuilds the gridlock result from a run's trace events alone.
///
/// Clusters come from the step 1 boundary, candidates and scores from
/// retrieval events, enactment from `get_bill_status` results and reviewer
/// changes from override events, applied in seq order.
pub fn rederive_gridlock(events: &[TraceEvent]) -> Result<GridlockResult, RederiveError> {
    fn decode<T: for<'de> Deserialize<'de>>(e: &TraceEvent) -> Result<T, RederiveError> {
        serde_json::from_value(e.payload.clone()).map_err(|err| RederiveError::BadEvent {
            seq: e.seq,
            message: err.to_string(),
        })
    }
    let mut congress = None;
    let mut order: Vec<String> = Vec::new();
    let mut clusters: BTreeMap<String, PolicyCluster> = BTreeMap::new();
    let mut work: BTreeMap<String, ClusterWork> = BTreeMap::new();
    let mut errored: BTreeMap<String, String> = BTreeMap::new();

    for e in events {
        match e.kind {
            TraceKind::StepBoundary => {
                let b: StepBoundary = decode(e)?;
                if b.step == 1 {
                    congress = Some(b.congress);
                    for c in b.clusters {
                        order.push(c.name.clone());
                        clusters.insert(c.name.clone(), c);
                    }
                }
            }
            TraceKind::Retrieval => {
                let r: RetrievalRecord = decode(e)?;
                let cluster = clusters
                    .get(&r.cluster)
                    .cloned()
                    .ok_or_else(|| RederiveError::UnknownCluster(r.cluster.clone()))?;
                let candidates = r
                    .hits
                    .iter()
                    .map(|h| {
                        // Bills whose status lookup never succeeded stay unknown.
                        let mut b = BillMatch::new(h.bill_id, "", "", h.score);
                        b.status = UNKNOWN_STATUS.into();
                        b
                    })
                    .collect();
                work.insert(r.cluster, ClusterWork::new(cluster, r.threshold, candidates));
            }
            TraceKind::Error => {
                if let Ok(f) = serde_json::from_value::<ClusterFailure>(e.payload.clone()) {
                    errored.insert(f.cluster, f.message);
                }
            }
            TraceKind::ToolResult => {
                let is_status = e.payload["tool_name"] == "get_bill_status";
                let ok = e.payload["outcome"] == "ok";
                if is_status && ok {
                    let s: StatusPayload =
                        serde_json::from_value(e.payload["payload"].clone()).map_err(|err| RederiveError::BadEvent {
                            seq: e.seq,
                            message: err.to_string(),
                        })?;
                    for w in work.values_mut() {
                        w.set_status(&s.bill_id, s.enacted, &s.status);
                    }
                }
            }
            TraceKind::Override => {
                let o: OverrideRecord = decode(e)?;
                let w = work
                    .get_mut(&o.cluster)
                    .ok_or_else(|| RederiveError::UnknownCluster(o.cluster.clone()))?;
                w.apply(&o.review).map_err(|err| RederiveError::BadEvent {
                    seq: e.seq,
                    message: err.to_string(),
                })?;
            }
            TraceKind::ToolCall | TraceKind::LlmRequest | TraceKind::LlmResponse => {}
        }
    }
    let congress = congress.ok_or(RederiveError::NoClusters)?;
    let reports = order
        .iter()
        .filter(|name| !errored.contains_key(*name))
        .filter_map(|name| work.get(name))
        .map(ClusterWork::report)
        .collect();
    let scope = events.first().map(|e| e.scope_id.clone()).unwrap_or_default();
    Ok(compute_gridlock(congress, reports, scope.clone(), scope)?)
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum IntegrityError {
    #[error("expected seq {expected}, found {found}")]
    SeqGap { expected: u64, found: u64 },
    #[error("event {seq} belongs to scope {found:?}, not {expected:?}")]
    ForeignScope { seq: u64, expected: String, found: String },
    #[error("tool call {0:?} has no result")]
    OrphanCall(String),
    #[error("tool result {0:?} has no call")]
    OrphanResult(String),
    #[error("{calls} tool calls but {results} tool results")]
    Unbalanced { calls: usize, results: usize },
}

/// Checks that seq runs 1..=n without gaps and that calls and results pair 1:1.
pub fn verify_scope(scope: &str, events: &[TraceEvent]) -> Result<(), IntegrityError> {
    let mut open: HashMap<String, u32> = HashMap::new();
    let (mut calls, mut results) = (0, 0);
    for (i, e) in events.iter().enumerate() {
        let expected = i as u64 + 1;
        if e.seq != expected {
            return Err(IntegrityError::SeqGap { expected, found: e.seq });
        }
        if e.scope_id != scope {
            return Err(IntegrityError::ForeignScope {
                seq: e.seq,
                expected: scope.into(),
                found: e.scope_id.clone(),
            });
        }
        let id = e.payload["call_id"].as_str().unwrap_or_default().to_string();
        match e.kind {
            TraceKind::ToolCall => {
                calls += 1;
                *open.entry(id).or_default() += 1;
            }
            TraceKind::ToolResult => {
                results += 1;
                match open.get_mut(&id) {
                    Some(n) if *n > 0 => *n -= 1,
                    _ => return Err(IntegrityError::OrphanResult(id)),
                }
            }
            _ => {}
        }
    }
    if let Some((id, _)) = open.iter().find(|(_, n)| **n > 0) {
        return Err(IntegrityError::OrphanCall(id.clone()));
    }
    if calls != results {
        return Err(IntegrityError::Unbalanced { calls, results });
    }
    Ok(())
}

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '&' => out.push_str("&amp;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

/// Audit report: clusters, their queries and hits, bill statuses, overrides
/// and the score, followed by the raw event log.
pub fn render_html(scope: &str, events: &[TraceEvent]) -> String {
    let mut h = String::new();
    let _ = write!(
        h,
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Trace {0}</title>\
         <style>body{{font-family:sans-serif}}table{{border-collapse:collapse}}td,th{{border:1px solid #ccc;padding:2px 6px;vertical-align:top}}pre{{margin:0;white-space:pre-wrap}}</style>\
         </head><body>\n<h1>Trace {0}</h1>\n<p>{1} events</p>\n",
        esc(scope),
        events.len()
    );
    let mut statuses: BTreeMap<String, (bool, String)> = BTreeMap::new();
    for e in events {
        if e.kind == TraceKind::ToolResult && e.payload["tool_name"] == "get_bill_status" {
            if let Ok(s) = serde_json::from_value::<StatusPayload>(e.payload["payload"].clone()) {
                statuses.insert(s.bill_id.render(), (s.enacted, s.status));
            }
        }
    }
    for e in events {
        match e.kind {
            TraceKind::StepBoundary => {
                if let Ok(b) = serde_json::from_value::<StepBoundary>(e.payload.clone()) {
                    let _ = writeln!(h, "<h2>Step {} complete (Congress {})</h2>", b.step, b.congress);
                    if !b.clusters.is_empty() {
                        h.push_str("<table><tr><th>Cluster</th><th>Articles</th><th>Query</th><th>Summary</th></tr>\n");
                        for c in &b.clusters {
                            let _ = writeln!(
                                h,
                                "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>",
                                esc(&c.name),
                                c.article_count,
                                esc(&c.query),
                                esc(&c.summary)
                            );
                        }
                        h.push_str("</table>\n");
                    }
                }
            }
            TraceKind::Retrieval => {
                if let Ok(r) = serde_json::from_value::<RetrievalRecord>(e.payload.clone()) {
                    let _ = writeln!(
                        h,
                        "<h3>{}</h3>\n<p>Query: <code>{}</code>, threshold {}, top_k {}, {} hits</p>",
                        esc(&r.cluster),
                        esc(&r.query),
                        r.threshold,
                        r.top_k,
                        r.hits.len()
                    );
                    h.push_str("<table><tr><th>Bill</th><th>Score</th><th>Enacted</th><th>Status</th></tr>\n");
                    for hit in &r.hits {
                        let id = hit.bill_id.render();
                        let (enacted, status) = statuses
                            .get(&id)
                            .map(|(e, s)| (if *e { "yes" } else { "no" }, s.as_str()))
                            .unwrap_or(("", "not checked"));
                        let _ = writeln!(
                            h,
                            "<tr><td>{}</td><td>{:.9}</td><td>{}</td><td>{}</td></tr>",
                            esc(&id),
                            hit.score,
                            enacted,
                            esc(status)
                        );
                    }
                    h.push_str("</table>\n");
                }
            }
            TraceKind::Override => {
                let _ = writeln!(h, "<h3>Override (event {})</h3><pre>{}</pre>", e.seq, esc(&e.payload.to_string()));
            }
            _ => {}
        }
    }
    match rederive_gridlock(events) {
        Ok(r) => {
            let _ = writeln!(
                h,
                "<h2>Gridlock</h2>\n<p>{} of {} clusters without enacted legislation: score {}</p>",
                r.gridlocked_clusters,
                r.total_clusters(),
                r.score
            );
        }
        Err(RederiveError::NoClusters) => {}
        Err(e) => {
            let _ = writeln!(h, "<h2>Gridlock</h2>\n<p>Not derivable: {}</p>", esc(&e.to_string()));
        }
    }
    h.push_str("<h2>Events</h2>\n<table><tr><th>seq</th><th>time</th><th>kind</th><th>latency ms</th><th>payload</th></tr>\n");
    for e in events {
        let _ = writeln!(
            h,
            "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td><pre>{}</pre></td></tr>",
            e.seq,
            esc(&e.timestamp),
            e.kind,
            e.latency_ms.map(|l| l.to_string()).unwrap_or_default(),
            esc(&e.payload.to_string())
        );
    }
    h.push_str("</table>\n</body></html>\n");
    h
}

//! Runs the three-step gridlock procedure for a Congress and persists each run.
//!
//! Step 1 asks the agent for policy clusters, step 2 matches bills to each
//! cluster by semantic search, step 3 looks up whether each matched bill was
//! enacted. Every step ends with one `step_boundary` trace event, and the run
//! document is saved after each step so an interrupted run resumes where it
//! stopped.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use legis_core::agent::{
    dispatch_tool_call, run_turn, ChatProvider, Conversation, OutcomeKind, ToolCall, ToolRegistry, ToolResult,
    TurnConfig,
};
use legis_core::pipeline::{parse_cluster_response, PipelineRun, RunError, RunOptions, RunState};
use legis_core::report::{BillMatch, ClusterReport, ClusterWork, GridlockResult, PolicyCluster, ReviewError, ReviewOverride, UNKNOWN_STATUS};
use legis_core::trace::{TraceError, TraceKind, TraceSink};
use legis_core::BillId;
use serde::Serialize;
use serde_json::{json, Value};

use crate::prompts::{congress_years, render, Prompts};
use crate::trace_store::{ClusterFailure, OverrideRecord, RetrievalHit, RetrievalRecord, StatusPayload, StepBoundary, TraceStore};

/// Attempts per cluster for the step 2 search before the cluster is marked errored.
pub const SEARCH_ATTEMPTS: u32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{what} {id:?} not found")]
    NotFound { what: &'static str, id: String },
    #[error("{0}")]
    Conflict(String),
    #[error("{field}: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("run {0} is already executing")]
    Busy(String),
    #[error("provider: {0}")]
    Provider(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("run storage {path}: {message}")]
    Storage { path: PathBuf, message: String },
}

impl From<RunError> for PipelineError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::UnknownCluster(name) => PipelineError::NotFound { what: "cluster", id: name },
            RunError::Review(ReviewError::InvalidThreshold(t)) => PipelineError::Invalid {
                field: "threshold",
                message: format!("{t} is outside [-1, 1]"),
            },
            RunError::Review(ReviewError::UnknownBill(id)) => PipelineError::Invalid {
                field: "bill_overrides",
                message: format!("bill {id} is not among this cluster's candidates"),
            },
            other => PipelineError::Conflict(other.to_string()),
        }
    }
}

/// Run documents as JSON, one file per run_id, replaced atomically.
pub struct RunStore {
    dir: Option<PathBuf>,
    cache: RwLock<HashMap<String, PipelineRun>>,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl RunStore {
    pub fn in_memory() -> Self {
        RunStore {
            dir: None,
            cache: RwLock::new(HashMap::new()),
            locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, PipelineError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| PipelineError::Storage {
            path: dir.clone(),
            message: e.to_string(),
        })?;
        Ok(RunStore {
            dir: Some(dir),
            ..RunStore::in_memory()
        })
    }

    fn path(&self, id: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{id}.json")))
    }

    pub fn get(&self, id: &str) -> Result<PipelineRun, PipelineError> {
        if let Some(r) = self.cache.read().unwrap_or_else(|p| p.into_inner()).get(id) {
            return Ok(r.clone());
        }
        let not_found = || PipelineError::NotFound {
            what: "run",
            id: id.into(),
        };
        if !crate::trace_store::valid_scope_id(id) {
            return Err(not_found());
        }
        let path = self.path(id).filter(|p| p.exists()).ok_or_else(not_found)?;
        let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::Storage {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let run: PipelineRun = serde_json::from_str(&text).map_err(|e| PipelineError::Storage {
            path,
            message: e.to_string(),
        })?;
        self.cache
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id.into(), run.clone());
        Ok(run)
    }

    pub fn put(&self, run: &PipelineRun) -> Result<(), PipelineError> {
        if let Some(path) = self.path(&run.run_id) {
            let storage = |e: std::io::Error| PipelineError::Storage {
                path: path.clone(),
                message: e.to_string(),
            };
            let tmp = path.with_extension("json.tmp");
            let text = serde_json::to_string_pretty(run).map_err(|e| PipelineError::Storage {
                path: path.clone(),
                message: e.to_string(),
            })?;
            std::fs::write(&tmp, text).map_err(storage)?;
            std::fs::File::open(&tmp).and_then(|f| f.sync_all()).map_err(storage)?;
            std::fs::rename(&tmp, &path).map_err(storage)?;
        }
        self.cache
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(run.run_id.clone(), run.clone());
        Ok(())
    }

    /// Every known run, including ones only on disk, ordered by run_id.
    pub fn list(&self) -> Vec<PipelineRun> {
        let mut ids: Vec<String> = self.cache.read().unwrap_or_else(|p| p.into_inner()).keys().cloned().collect();
        if let Some(dir) = &self.dir {
            if let Ok(entries) = std::fs::read_dir(dir) {
                for e in entries.flatten() {
                    let name = e.file_name().to_string_lossy().to_string();
                    if let Some(id) = name.strip_suffix(".json") {
                        ids.push(id.to_string());
                    }
                }
            }
        }
        ids.sort();
        ids.dedup();
        ids.iter().filter_map(|id| self.get(id).ok()).collect()
    }

    /// Serializes mutations of one run.
    pub fn lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .entry(id.into())
            .or_default()
            .clone()
    }
}

/// Supplies the chat provider for a run (`Some(congress)`) or a session (`None`).
pub trait ProviderFactory: Send + Sync {
    fn provider(&self, congress: Option<u32>) -> Result<Arc<dyn ChatProvider>, String>;
}

/// One provider shared by every run and session.
pub struct SharedProvider(pub Arc<dyn ChatProvider>);

impl ProviderFactory for SharedProvider {
    fn provider(&self, _: Option<u32>) -> Result<Arc<dyn ChatProvider>, String> {
        Ok(self.0.clone())
    }
}

/// Fresh scripted providers read from `agent.jsonl` files, one per Congress.
#[derive(Debug, Clone, Default)]
pub struct ScriptFactory {
    pub by_congress: BTreeMap<u32, PathBuf>,
    pub session: Option<PathBuf>,
}

impl ProviderFactory for ScriptFactory {
    fn provider(&self, congress: Option<u32>) -> Result<Arc<dyn ChatProvider>, String> {
        let path = match congress {
            Some(c) => self
                .by_congress
                .get(&c)
                .ok_or_else(|| format!("no recorded agent script for Congress {c}"))?,
            None => self.session.as_ref().ok_or("no recorded agent script for sessions")?,
        };
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let p = legis_core::agent::ScriptedProvider::from_jsonl(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(Arc::new(p))
    }
}

/// Outcome of one Congress in a series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesEntry {
    pub congress: u32,
    pub run_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<GridlockResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct Engine {
    pub registry: Arc<ToolRegistry>,
    pub providers: Arc<dyn ProviderFactory>,
    pub trace: Arc<TraceStore>,
    pub runs: Arc<RunStore>,
    pub prompts: Prompts,
    pub turn: TurnConfig,
    running: Mutex<HashSet<String>>,
}

struct Running<'a> {
    set: &'a Mutex<HashSet<String>>,
    id: String,
}

impl Drop for Running<'_> {
    fn drop(&mut self) {
        self.set.lock().unwrap_or_else(|p| p.into_inner()).remove(&self.id);
    }
}

impl Engine {
    pub fn new(
        registry: Arc<ToolRegistry>,
        providers: Arc<dyn ProviderFactory>,
        trace: Arc<TraceStore>,
        runs: Arc<RunStore>,
    ) -> Self {
        Engine {
            registry,
            providers,
            trace,
            runs,
            prompts: Prompts::default(),
            turn: TurnConfig::default(),
            running: Mutex::new(HashSet::new()),
        }
    }

    /// Creates and stores a pending run and its trace scope.
    pub fn create_run(&self, congress: u32, options: RunOptions) -> Result<PipelineRun, PipelineError> {
        self.create_run_with_id(uuid::Uuid::new_v4().to_string(), congress, options)
    }

    pub fn create_run_with_id(&self, run_id: String, congress: u32, options: RunOptions) -> Result<PipelineRun, PipelineError> {
        if congress == 0 {
            return Err(PipelineError::Invalid {
                field: "congress",
                message: "must be a positive integer".into(),
            });
        }
        if !(-1.0..=1.0).contains(&options.threshold) {
            return Err(PipelineError::Invalid {
                field: "threshold",
                message: format!("{} is outside [-1, 1]", options.threshold),
            });
        }
        if options.top_k == 0 {
            return Err(PipelineError::Invalid {
                field: "top_k",
                message: "must be at least 1".into(),
            });
        }
        self.trace.create_scope(&run_id).map_err(TraceError::from)?;
        let run = PipelineRun::new(run_id, congress, options);
        self.runs.put(&run)?;
        Ok(run)
    }

    pub fn run_congress(&self, congress: u32, options: RunOptions) -> Result<PipelineRun, PipelineError> {
        let run = self.create_run(congress, options)?;
        self.execute(&run.run_id)
    }

    /// Drives a run until it awaits review, is finalized or fails.
    pub fn execute(&self, run_id: &str) -> Result<PipelineRun, PipelineError> {
        self.execute_until(run_id, None)
    }

    /// Like [`execute`](Self::execute), but returns once the run reaches `stop`.
    pub fn execute_until(&self, run_id: &str, stop: Option<RunState>) -> Result<PipelineRun, PipelineError> {
        {
            let mut running = self.running.lock().unwrap_or_else(|p| p.into_inner());
            if !running.insert(run_id.into()) {
                return Err(PipelineError::Busy(run_id.into()));
            }
        }
        let _guard = Running {
            set: &self.running,
            id: run_id.into(),
        };
        let mut run = self.runs.get(run_id)?;
        self.trace.create_scope(run_id).map_err(TraceError::from)?;
        let provider = match self.providers.provider(Some(run.congress)) {
            Ok(p) => Some(p),
            Err(e) => {
                // Only steps that talk to the agent need it.
                if run.state == RunState::Pending || run.state == RunState::Step1 || run.options.agent_checks {
                    self.record_failure(&mut run, "provider", &e)?;
                    return Ok(run);
                }
                None
            }
        };
        loop {
            if Some(run.state) == stop {
                return Ok(run);
            }
            let step = match run.state {
                RunState::Pending => {
                    run.transition(RunState::Step1)?;
                    Ok(())
                }
                RunState::Step1 => self.step1(&mut run, provider.as_deref().expect("checked above")),
                RunState::Step2 => self.step2(&mut run),
                RunState::Step3 => self.step3(&mut run, provider.as_deref()),
                RunState::AwaitingReview | RunState::Finalized | RunState::Failed => return Ok(run),
            };
            match step {
                Ok(()) => self.save(&run)?,
                Err(StepFailure::Fatal(message)) => {
                    let source = run.state.as_str();
                    self.record_failure(&mut run, source, &message)?;
                    return Ok(run);
                }
                Err(StepFailure::Pipeline(e)) => return Err(e),
            }
        }
    }

    fn save(&self, run: &PipelineRun) -> Result<(), PipelineError> {
        let lock = self.runs.lock(&run.run_id);
        let _g = lock.lock().unwrap_or_else(|p| p.into_inner());
        self.runs.put(run)
    }

    fn record_failure(&self, run: &mut PipelineRun, source: &str, message: &str) -> Result<(), PipelineError> {
        self.trace
            .record(&run.run_id, TraceKind::Error, json!({"source": source, "message": message}), None)?;
        run.fail(message);
        self.save(run)
    }

    fn boundary(&self, run: &PipelineRun, step: u8, clusters: Vec<PolicyCluster>) -> Result<(), PipelineError> {
        // A resumed step must not emit its boundary twice.
        let done = self
            .trace
            .read_events(&run.run_id)
            .map_err(TraceError::from)?
            .iter()
            .any(|e| e.kind == TraceKind::StepBoundary && e.payload["step"] == json!(step));
        if !done {
            let b = StepBoundary {
                step,
                congress: run.congress,
                clusters,
            };
            self.trace.record(
                &run.run_id,
                TraceKind::StepBoundary,
                serde_json::to_value(b).unwrap_or_default(),
                None,
            )?;
        }
        Ok(())
    }

    fn step1(&self, run: &mut PipelineRun, provider: &dyn ChatProvider) -> Result<(), StepFailure> {
        let (start, end) = congress_years(run.congress);
        let prompt = render(
            &self.prompts.step1,
            &[
                ("congress", run.congress.to_string()),
                ("start_year", start.to_string()),
                ("end_year", end.to_string()),
            ],
        );
        let mut conv = Conversation::new(run.run_id.clone(), self.prompts.system.clone());
        let mut outcome = run_turn(&mut conv, &prompt, &self.registry, provider, self.turn, self.trace.as_ref())?;
        let mut parsed = step1_parse(&outcome);
        if let Err(error) = &parsed {
            if outcome.kind == OutcomeKind::ProviderError {
                return Err(StepFailure::Fatal(format!("step 1 provider failure: {error}")));
            }
            self.trace.record(
                &run.run_id,
                TraceKind::Error,
                json!({"source": "step1_validation", "attempt": 1, "message": error}),
                None,
            )?;
            let retry = render(&self.prompts.step1_retry, &[("error", error.clone())]);
            outcome = run_turn(&mut conv, &retry, &self.registry, provider, self.turn, self.trace.as_ref())?;
            parsed = step1_parse(&outcome);
        }
        let clusters = parsed.map_err(|e| StepFailure::Fatal(format!("step 1 output rejected twice: {e}")))?;
        self.boundary(run, 1, clusters.clone())?;
        run.clusters = clusters;
        run.transition(RunState::Step2)?;
        Ok(())
    }

    fn search_cluster(&self, run: &PipelineRun, index: usize, cluster: &PolicyCluster) -> Result<ClusterWork, StepFailure> {
        let threshold = run.options.threshold;
        let mut last_error = String::new();
        for attempt in 1..=SEARCH_ATTEMPTS {
            let call = ToolCall {
                call_id: format!("step2-{}-{attempt}", index + 1),
                tool_name: "search_bill_summaries".into(),
                arguments: json!({
                    "query": cluster.query,
                    "congress": run.congress,
                    "top_k": run.options.top_k,
                    "threshold": threshold,
                })
                .as_object()
                .cloned()
                .unwrap_or_default(),
            };
            let result = dispatch_tool_call(&self.registry, &call, self.trace.as_ref(), &run.run_id)?;
            if !result.is_ok() {
                last_error = error_text(&result);
                continue;
            }
            let candidates = match parse_hits(&result.payload) {
                Ok(c) => c,
                Err(e) => {
                    last_error = e;
                    continue;
                }
            };
            let record = RetrievalRecord {
                cluster: cluster.name.clone(),
                query: cluster.query.clone(),
                congress: run.congress,
                threshold,
                top_k: run.options.top_k,
                hits: candidates
                    .iter()
                    .map(|b| RetrievalHit {
                        bill_id: b.bill_id,
                        score: b.score,
                    })
                    .collect(),
            };
            self.trace.record(
                &run.run_id,
                TraceKind::Retrieval,
                serde_json::to_value(record).unwrap_or_default(),
                None,
            )?;
            return Ok(ClusterWork::new(cluster.clone(), threshold, candidates));
        }
        let failure = ClusterFailure {
            source: "step2".into(),
            cluster: cluster.name.clone(),
            message: last_error.clone(),
        };
        self.trace.record(
            &run.run_id,
            TraceKind::Error,
            serde_json::to_value(failure).unwrap_or_default(),
            None,
        )?;
        Ok(ClusterWork::errored(cluster.clone(), threshold, last_error))
    }

    fn step2(&self, run: &mut PipelineRun) -> Result<(), StepFailure> {
        let mut work = Vec::with_capacity(run.clusters.len());
        for (i, cluster) in run.clusters.clone().iter().enumerate() {
            let w = self.search_cluster(run, i, cluster)?;
            if let Some(e) = &w.error {
                run.warnings
                    .push(format!("cluster {:?} excluded from the score: {e}", cluster.name));
            }
            work.push(w);
        }
        run.work = work;
        run.refresh_reports();
        self.boundary(run, 2, Vec::new())?;
        run.transition(RunState::Step3)?;
        Ok(())
    }

    /// Looks up one bill and applies the answer to every cluster listing it.
    fn check_bill(
        &self,
        run: &mut PipelineRun,
        cluster_idx: usize,
        id: BillId,
        provider: Option<&dyn ChatProvider>,
        seq: usize,
    ) -> Result<(), StepFailure> {
        let result = match (run.options.agent_checks, provider) {
            (true, Some(p)) => self.agent_status_check(run, id, p)?,
            _ => {
                let call = ToolCall {
                    call_id: format!("step3-{}-{}", cluster_idx + 1, seq),
                    tool_name: "get_bill_status".into(),
                    arguments: json!({"bill_id": id.render()}).as_object().cloned().unwrap_or_default(),
                };
                Some(dispatch_tool_call(&self.registry, &call, self.trace.as_ref(), &run.run_id)?)
            }
        };
        let status = result
            .as_ref()
            .filter(|r| r.is_ok())
            .and_then(|r| serde_json::from_value::<StatusPayload>(r.payload.clone()).ok());
        match status {
            Some(s) => {
                for w in run.work.iter_mut() {
                    w.set_status(&s.bill_id, s.enacted, &s.status);
                }
            }
            None => {
                let why = result.as_ref().map(error_text).unwrap_or_else(|| "no status returned".into());
                run.warnings.push(format!("bill {id}: status unknown ({why})"));
                run.work[cluster_idx].set_status(&id, false, UNKNOWN_STATUS);
            }
        }
        Ok(())
    }

    fn agent_status_check(&self, run: &PipelineRun, id: BillId, provider: &dyn ChatProvider) -> Result<Option<ToolResult>, StepFailure> {
        let prompt = render(&self.prompts.step3, &[("bill_id", id.render())]);
        let mut conv = Conversation::new(run.run_id.clone(), self.prompts.system.clone());
        let outcome = run_turn(&mut conv, &prompt, &self.registry, provider, self.turn, self.trace.as_ref())?;
        if outcome.kind == OutcomeKind::ProviderError {
            return Err(StepFailure::Fatal(format!(
                "step 3 provider failure: {}",
                outcome.error.unwrap_or_default()
            )));
        }
        let target = id.render();
        let found = outcome
            .tool_calls_made
            .iter()
            .rev()
            .filter(|x| x.call.tool_name == "get_bill_status")
            .filter(|x| {
                x.call
                    .arguments
                    .get("bill_id")
                    .and_then(Value::as_str)
                    .and_then(|s| BillId::parse(s).ok())
                    .map(|b| b.render())
                    == Some(target.clone())
            })
            .map(|x| x.result.clone())
            .reduce(|best, r| if best.is_ok() { best } else { r });
        Ok(found)
    }

    /// Checks every included bill that has no status yet.
    fn check_pending(&self, run: &mut PipelineRun, provider: Option<&dyn ChatProvider>) -> Result<(), StepFailure> {
        for ci in 0..run.work.len() {
            if run.work[ci].is_errored() {
                continue;
            }
            let todo: Vec<BillId> = run.work[ci]
                .visible_bills()
                .into_iter()
                .filter(|b| b.included && b.status.is_empty())
                .map(|b| b.bill_id)
                .collect();
            for (n, id) in todo.into_iter().enumerate() {
                self.check_bill(run, ci, id, provider, n + 1)?;
            }
            run.work[ci].statuses_checked = true;
        }
        run.refresh_reports();
        Ok(())
    }

    fn step3(&self, run: &mut PipelineRun, provider: Option<&dyn ChatProvider>) -> Result<(), StepFailure> {
        self.check_pending(run, provider)?;
        self.boundary(run, 3, Vec::new())?;
        if run.options.no_review {
            run.finalize()?;
        } else {
            run.transition(RunState::AwaitingReview)?;
        }
        Ok(())
    }

    /// Applies a reviewer change, checks any newly visible bills and
    /// recomputes the score if the run is finalized.
    pub fn review_override(
        &self,
        run_id: &str,
        cluster: &str,
        review: &ReviewOverride,
        actor: &str,
    ) -> Result<(ClusterReport, PipelineRun), PipelineError> {
        let lock = self.runs.lock(run_id);
        let _g = lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut run = self.runs.get(run_id)?;
        // Validate on a copy so a rejected change leaves no trace event.
        run.clone().review(cluster, review)?;
        let record = OverrideRecord {
            cluster: cluster.into(),
            actor: actor.into(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            review: review.clone(),
        };
        self.trace.record(
            run_id,
            TraceKind::Override,
            serde_json::to_value(record).unwrap_or_default(),
            None,
        )?;
        run.review(cluster, review)?;
        self.check_pending(&mut run, None).map_err(StepFailure::into_pipeline)?;
        if run.state == RunState::Finalized {
            run.result = Some(run.current_gridlock().map_err(RunError::from)?);
        }
        self.runs.put(&run)?;
        let report = run.work_mut(cluster)?.report();
        Ok((report, run))
    }

    pub fn finalize(&self, run_id: &str) -> Result<PipelineRun, PipelineError> {
        let lock = self.runs.lock(run_id);
        let _g = lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut run = self.runs.get(run_id)?;
        if run.state != RunState::AwaitingReview {
            return Err(PipelineError::Conflict(format!(
                "run is {}; only a run awaiting review can be finalized",
                run.state
            )));
        }
        run.finalize()?;
        self.runs.put(&run)?;
        Ok(run)
    }

    /// Runs each Congress in turn; a failed Congress does not stop the series.
    pub fn run_series(&self, from: u32, to: u32, options: &RunOptions) -> Vec<SeriesEntry> {
        (from..=to)
            .map(|congress| match self.run_congress(congress, options.clone()) {
                Ok(run) => SeriesEntry {
                    congress,
                    run_id: run.run_id.clone(),
                    score: run.result.as_ref().map(|r| r.score),
                    error: run.error.clone().or_else(|| {
                        (run.state != RunState::Finalized).then(|| format!("run is {}", run.state))
                    }),
                    result: run.result,
                },
                Err(e) => SeriesEntry {
                    congress,
                    run_id: String::new(),
                    score: None,
                    result: None,
                    error: Some(e.to_string()),
                },
            })
            .collect()
    }

    /// Latest finalized score per Congress in `from..=to`, by run order.
    pub fn stored_series(&self, from: u32, to: u32) -> Vec<(u32, f64)> {
        let mut latest: BTreeMap<u32, f64> = BTreeMap::new();
        for run in self.runs.list() {
            if let (true, Some(r)) = ((from..=to).contains(&run.congress), &run.result) {
                latest.insert(run.congress, r.score);
            }
        }
        latest.into_iter().collect()
    }
}

enum StepFailure {
    /// Marks the run failed.
    Fatal(String),
    Pipeline(PipelineError),
}

impl StepFailure {
    fn into_pipeline(self) -> PipelineError {
        match self {
            StepFailure::Fatal(m) => PipelineError::Provider(m),
            StepFailure::Pipeline(e) => e,
        }
    }
}

impl<E: Into<PipelineError>> From<E> for StepFailure {
    fn from(e: E) -> Self {
        StepFailure::Pipeline(e.into())
    }
}

fn step1_parse(outcome: &legis_core::agent::TurnOutcome) -> Result<Vec<PolicyCluster>, String> {
    match outcome.kind {
        OutcomeKind::Answered => parse_cluster_response(&outcome.final_text).map_err(|e| e.to_string()),
        OutcomeKind::IterationLimit => Err("the iteration limit was reached before a cluster list was returned".into()),
        OutcomeKind::ProviderError => Err(outcome.error.clone().unwrap_or_else(|| "provider error".into())),
    }
}

fn error_text(r: &ToolResult) -> String {
    let kind = r.error_kind().unwrap_or("error");
    let msg = r.payload.get("message").and_then(Value::as_str).unwrap_or_default();
    format!("{kind}: {msg}")
}

fn parse_hits(payload: &Value) -> Result<Vec<BillMatch>, String> {
    let hits = payload
        .get("hits")
        .and_then(Value::as_array)
        .ok_or("search result has no hits array")?;
    hits.iter()
        .map(|h| {
            let id = h
                .get("bill_id")
                .and_then(Value::as_str)
                .ok_or("hit without bill_id")?;
            let id = BillId::parse(id).map_err(|e| format!("hit {id:?}: {e}"))?;
            let score = h.get("score").and_then(Value::as_f64).ok_or("hit without score")?;
            let s = |k: &str| h.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
            Ok(BillMatch::new(id, s("title"), s("summary"), score))
        })
        .collect()
}

/// `congress,score` rows with a header.
pub fn series_csv(entries: &[(u32, f64)]) -> String {
    let mut out = String::from("congress,score\n");
    for (c, s) in entries {
        let _ = writeln!(out, "{c},{s}");
    }
    out
}

/// Bar chart of gridlock by Congress, scores shown as percentages.
pub fn series_svg(entries: &[(u32, f64)]) -> String {
    let (w, h, left, bottom, top) = (640.0, 360.0, 56.0, 40.0, 24.0);
    let plot_h = h - bottom - top;
    let n = entries.len().max(1) as f64;
    let slot = (w - left - 16.0) / n;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<title>Legislative gridlock by Congress</title>");
    for pct in [0, 25, 50, 75, 100] {
        let y = top + plot_h * (1.0 - f64::from(pct) / 100.0);
        let _ = writeln!(
            s,
            "<line x1=\"{left}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/><text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{pct}%</text>",
            w - 16.0,
            left - 6.0,
            y + 4.0
        );
    }
    for (i, (c, score)) in entries.iter().enumerate() {
        let bar_h = plot_h * score.clamp(0.0, 1.0);
        let x = left + slot * i as f64 + slot * 0.15;
        let y = top + plot_h - bar_h;
        let _ = writeln!(
            s,
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{bar_h:.1}\" fill=\"#4a6fa5\"><title>{c}: {score}</title></rect>",
            slot * 0.7
        );
        let cx = x + slot * 0.35;
        let _ = writeln!(
            s,
            "<text x=\"{cx:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.1}%</text><text x=\"{cx:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{c}</text>",
            y - 4.0,
            score * 100.0,
            h - bottom + 16.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Reads a run's trace and checks the stored result against it.
pub fn verify_run(trace: &TraceStore, run: &PipelineRun) -> Result<GridlockResult, String> {
    let events = trace.read_events(&run.run_id).map_err(|e| e.to_string())?;
    crate::trace_store::verify_scope(&run.run_id, &events).map_err(|e| e.to_string())?;
    let derived = crate::trace_store::rederive_gridlock(&events).map_err(|e| e.to_string())?;
    match &run.result {
        Some(stored) if stored.score != derived.score || stored.gridlocked_clusters != derived.gridlocked_clusters => Err(format!(
            "trace gives {}/{} = {}, run stores {}/{} = {}",
            derived.gridlocked_clusters,
            derived.total_clusters(),
            derived.score,
            stored.gridlocked_clusters,
            stored.total_clusters(),
            stored.score
        )),
        _ => Ok(derived),
    }
}

//! Run state for the three-step gridlock procedure: identify clusters, match
//! bills, check enactment. Orchestration (model calls, storage) lives in the std
//! crate; this module owns the state machine and the parsing of model output.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::report::{
    compute_gridlock, ClusterReport, ClusterWork, GridlockError, GridlockResult, PolicyCluster, ReviewError,
    ReviewOverride,
};

/// Default similarity threshold for bill matching.
pub const DEFAULT_THRESHOLD: f64 = 0.4;
/// Default result cap for bill searches.
pub const DEFAULT_BILL_TOP_K: usize = 100;
/// Default result cap for article searches.
pub const DEFAULT_ARTICLE_TOP_K: usize = 200;

/// Where a run is. `Step1`..`Step3` name the step to execute next (or in progress),
/// so a persisted run resumes by executing its current state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Pending,
    Step1,
    Step2,
    Step3,
    AwaitingReview,
    Finalized,
    Failed,
}

impl RunState {
    pub fn as_str(self) -> &'static str {
        match self {
            RunState::Pending => "pending",
            RunState::Step1 => "step1",
            RunState::Step2 => "step2",
            RunState::Step3 => "step3",
            RunState::AwaitingReview => "awaiting_review",
            RunState::Finalized => "finalized",
            RunState::Failed => "failed",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, RunState::Finalized | RunState::Failed)
    }

    pub fn can_transition_to(self, next: RunState) -> bool {
        use RunState::*;
        match (self, next) {
            (Pending, Step1) | (Step1, Step2) | (Step2, Step3) => true,
            (Step3, AwaitingReview) | (Step3, Finalized) | (AwaitingReview, Finalized) => true,
            (from, Failed) => !from.is_terminal(),
            _ => false,
        }
    }
}

impl fmt::Display for RunState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error("cannot move run from {from} to {to}")]
    IllegalTransition { from: RunState, to: RunState },
    #[error("run is {0}; review requires awaiting_review or finalized")]
    NotReviewable(RunState),
    #[error("no cluster named {0:?}")]
    UnknownCluster(String),
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error(transparent)]
    Gridlock(#[from] GridlockError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Finalize automatically after step 3 instead of pausing for review.
    #[serde(default)]
    pub no_review: bool,
    /// Route step-3 status checks through agent turns instead of direct tool calls.
    #[serde(default)]
    pub agent_checks: bool,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_top_k() -> usize {
    DEFAULT_BILL_TOP_K
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            no_review: false,
            agent_checks: false,
            threshold: DEFAULT_THRESHOLD,
            top_k: DEFAULT_BILL_TOP_K,
        }
    }
}

/// A persisted pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub run_id: String,
    pub congress: u32,
    pub state: RunState,
    #[serde(default)]
    pub options: RunOptions,
    #[serde(default)]
    pub clusters: Vec<PolicyCluster>,
    #[serde(default)]
    pub work: Vec<ClusterWork>,
    #[serde(default)]
    pub cluster_reports: Vec<ClusterReport>,
    #[serde(default)]
    pub result: Option<GridlockResult>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PipelineRun {
    pub fn new(run_id: impl Into<String>, congress: u32, options: RunOptions) -> Self {
        PipelineRun {
            run_id: run_id.into(),
            congress,
            state: RunState::Pending,
            options,
            clusters: Vec::new(),
            work: Vec::new(),
            cluster_reports: Vec::new(),
            result: None,
            warnings: Vec::new(),
            error: None,
        }
    }

    /// Trace scope for this run's events.
    pub fn trace_ref(&self) -> String {
        self.run_id.clone()
    }

    pub fn transition(&mut self, next: RunState) -> Result<(), RunError> {
        if !self.state.can_transition_to(next) {
            return Err(RunError::IllegalTransition {
                from: self.state,
                to: next,
            });
        }
        self.state = next;
        Ok(())
    }

    pub fn fail(&mut self, reason: impl Into<String>) {
        if !self.state.is_terminal() {
            self.state = RunState::Failed;
        }
        self.error = Some(reason.into());
    }

    /// Rebuilds `cluster_reports` from the work items. Errored clusters are left out.
    pub fn refresh_reports(&mut self) {
        self.cluster_reports = self.work.iter().filter(|w| !w.is_errored()).map(ClusterWork::report).collect();
    }

    /// Gridlock over the current reports, whether or not the run is finalized.
    pub fn current_gridlock(&self) -> Result<GridlockResult, GridlockError> {
        compute_gridlock(self.congress, self.cluster_reports.clone(), self.run_id.clone(), self.trace_ref())
    }

    /// Computes and stores the result. Allowed from `step3` and `awaiting_review`.
    pub fn finalize(&mut self) -> Result<&GridlockResult, RunError> {
        if !self.state.can_transition_to(RunState::Finalized) {
            return Err(RunError::IllegalTransition {
                from: self.state,
                to: RunState::Finalized,
            });
        }
        self.refresh_reports();
        let result = self.current_gridlock()?;
        self.state = RunState::Finalized;
        Ok(self.result.insert(result))
    }

    pub fn work_mut(&mut self, cluster_name: &str) -> Result<&mut ClusterWork, RunError> {
        self.work
            .iter_mut()
            .find(|w| w.cluster.name == cluster_name)
            .ok_or_else(|| RunError::UnknownCluster(cluster_name.into()))
    }

    /// Applies a reviewer change and recomputes the affected report (and the stored
    /// result if the run is finalized).
    pub fn review(&mut self, cluster_name: &str, change: &ReviewOverride) -> Result<ClusterReport, RunError> {
        if !matches!(self.state, RunState::AwaitingReview | RunState::Finalized) {
            return Err(RunError::NotReviewable(self.state));
        }
        let work = self.work_mut(cluster_name)?;
        work.apply(change)?;
        let report = work.report();
        self.refresh_reports();
        if self.state == RunState::Finalized {
            self.result = Some(self.current_gridlock()?);
        }
        Ok(report)
    }

    /// `result` is present exactly when the run is finalized.
    pub fn is_consistent(&self) -> bool {
        (self.state == RunState::Finalized) == self.result.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClusterParseError {
    #[error("response contains no JSON object")]
    NoJson,
    #[error("response JSON is malformed: {0}")]
    Malformed(String),
    #[error("response has no \"clusters\" array")]
    MissingClusters,
    #[error("cluster {index}: {message}")]
    InvalidCluster { index: usize, message: String },
    #[error("response lists no clusters")]
    Empty,
    #[error("cluster name {0:?} appears more than once")]
    DuplicateName(String),
}

/// Extracts and validates the cluster list from a model's final answer.
///
/// Accepts `{"clusters": [...]}` or a bare array, optionally wrapped in prose or a
/// fenced code block. Each entry must carry exactly
/// `name, articles, article_count, summary, query`.
pub fn parse_cluster_response(text: &str) -> Result<Vec<PolicyCluster>, ClusterParseError> {
    let value = extract_json(text)?;
    let items = match value {
        Value::Array(items) => items,
        Value::Object(mut map) => match map.remove("clusters") {
            Some(Value::Array(items)) => items,
            _ => return Err(ClusterParseError::MissingClusters),
        },
        _ => return Err(ClusterParseError::MissingClusters),
    };
    if items.is_empty() {
        return Err(ClusterParseError::Empty);
    }
    let mut seen = BTreeSet::new();
    let mut clusters = Vec::with_capacity(items.len());
    for (index, item) in items.into_iter().enumerate() {
        let cluster: PolicyCluster = serde_json::from_value(item).map_err(|e| ClusterParseError::InvalidCluster {
            index,
            message: format!("{e}"),
        })?;
        cluster
            .validate()
            .map_err(|message| ClusterParseError::InvalidCluster { index, message })?;
        if !seen.insert(cluster.name.clone()) {
            return Err(ClusterParseError::DuplicateName(cluster.name));
        }
        clusters.push(cluster);
    }
    Ok(clusters)
}

fn extract_json(text: &str) -> Result<Value, ClusterParseError> {
    let trimmed = text.trim();
    if let Ok(v) = serde_json::from_str::<Value>(trimmed) {
        return Ok(v);
    }
    let start = trimmed.find(['{', '[']).ok_or(ClusterParseError::NoJson)?;
    let close = if trimmed.as_bytes()[start] == b'{' { '}' } else { ']' };
    let end = trimmed.rfind(close).ok_or(ClusterParseError::NoJson)?;
    if end <= start {
        return Err(ClusterParseError::NoJson);
    }
    serde_json::from_str(&trimmed[start..=end]).map_err(|e| ClusterParseError::Malformed(format!("{e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BillId, BillType};
    use crate::report::BillMatch;
    use alloc::string::ToString;
    use alloc::vec;

    const TWO: &str = r#"{"clusters": [
        {"name": "Immigration Reform", "articles": ["a", "b"], "article_count": 12,
         "summary": "stalled", "query": "immigration reform pathway citizenship"},
        {"name": "Gun Control Legislation", "articles": [], "article_count": 14,
         "summary": "failed", "query": "gun control background checks"}
    ]}"#;

    #[test]
    fn parses_plain_and_fenced() {
        assert_eq!(parse_cluster_response(TWO).unwrap().len(), 2);
        let fenced = format!("Here are the clusters:\n```json\n{TWO}\n```\nDone.");
        let clusters = parse_cluster_response(&fenced).unwrap();
        assert_eq!(clusters[0].name, "Immigration Reform");
        assert_eq!(clusters[0].article_refs.len(), 2);
    }

    #[test]
    fn rejects_schema_violations() {
        assert_eq!(parse_cluster_response("no json here"), Err(ClusterParseError::NoJson));
        assert!(matches!(parse_cluster_response("{\"clusters\": [{\"name\": \"x\"}]}"), Err(ClusterParseError::InvalidCluster { index: 0, .. })));
        assert_eq!(parse_cluster_response("{\"clusters\": []}"), Err(ClusterParseError::Empty));
        assert_eq!(parse_cluster_response("{\"topics\": []}"), Err(ClusterParseError::MissingClusters));
        let extra = TWO.replace("\"summary\": \"stalled\"", "\"summary\": \"stalled\", \"mood\": 1");
        assert!(matches!(parse_cluster_response(&extra), Err(ClusterParseError::InvalidCluster { .. })));
        let blank_query = TWO.replace("immigration reform pathway citizenship", " ");
        assert!(matches!(parse_cluster_response(&blank_query), Err(ClusterParseError::InvalidCluster { .. })));
        let dup = TWO.replace("Gun Control Legislation", "Immigration Reform");
        assert!(matches!(parse_cluster_response(&dup), Err(ClusterParseError::DuplicateName(_))));
    }

    #[test]
    fn state_machine() {
        use RunState::*;
        assert!(Pending.can_transition_to(Step1));
        assert!(!Pending.can_transition_to(Step3));
        assert!(!Step2.can_transition_to(Finalized));
        assert!(AwaitingReview.can_transition_to(Finalized));
        assert!(!Finalized.can_transition_to(Failed));
        assert!(Step2.can_transition_to(Failed));
    }

    fn ready_run() -> PipelineRun {
        let mut run = PipelineRun::new("run-1", 116, RunOptions::default());
        for s in [RunState::Step1, RunState::Step2, RunState::Step3] {
            run.transition(s).unwrap();
        }
        let clusters = parse_cluster_response(TWO).unwrap();
        let mut enacted = BillMatch::new(BillId::new(116, BillType::Hr, 1).unwrap(), "t", "s", 0.7);
        enacted.enacted = true;
        enacted.status = "Became Public Law".into();
        let other = BillMatch::new(BillId::new(116, BillType::S, 2).unwrap(), "t", "s", 0.5);
        run.work = vec![
            ClusterWork::new(clusters[0].clone(), 0.4, vec![enacted, other]),
            ClusterWork::new(clusters[1].clone(), 0.4, vec![]),
        ];
        run.clusters = clusters;
        run.refresh_reports();
        run
    }

    #[test]
    fn finalize_only_from_review_or_step3() {
        let mut early = PipelineRun::new("r", 116, RunOptions::default());
        early.transition(RunState::Step1).unwrap();
        early.transition(RunState::Step2).unwrap();
        assert!(matches!(early.finalize(), Err(RunError::IllegalTransition { .. })));
        assert!(early.is_consistent());

        let mut run = ready_run();
        run.transition(RunState::AwaitingReview).unwrap();
        assert!(run.is_consistent());
        assert_eq!(run.finalize().unwrap().score, 0.5);
        assert!(run.is_consistent());
    }

    #[test]
    fn review_recomputes_finalized_result() {
        let mut run = ready_run();
        assert!(matches!(
            run.review("Immigration Reform", &ReviewOverride::default()),
            Err(RunError::NotReviewable(RunState::Step3))
        ));
        run.transition(RunState::AwaitingReview).unwrap();
        run.finalize().unwrap();
        let mut change = ReviewOverride::default();
        change.bill_overrides.insert(BillId::new(116, BillType::Hr, 1).unwrap(), false);
        let report = run.review("Immigration Reform", &change).unwrap();
        assert!(!report.has_enacted_legislation);
        assert_eq!(run.result.as_ref().unwrap().score, 1.0);
        assert!(matches!(run.review("Nope", &change), Err(RunError::UnknownCluster(_))));
    }

    #[test]
    fn errored_clusters_are_left_out() {
        let mut run = ready_run();
        run.work.push(ClusterWork::errored(
            PolicyCluster {
                name: "Broken".into(),
                article_refs: vec![],
                article_count: 1,
                summary: String::new(),
                query: "q".into(),
            },
            0.4,
            "embedding failed".to_string(),
        ));
        run.refresh_reports();
        assert_eq!(run.cluster_reports.len(), 2);
    }
}

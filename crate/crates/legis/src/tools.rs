//! The agent's tools, bound to the stores and API clients.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use legis_core::agent::{ErrorKind, ParamType, RegistryError, ToolDefinition, ToolError, ToolRegistry};
use legis_core::embed::Embedder;
use legis_core::pipeline::{DEFAULT_ARTICLE_TOP_K, DEFAULT_BILL_TOP_K, DEFAULT_THRESHOLD};
use legis_core::search::Condition;
use legis_core::{BillId, Collection, MetadataFilter, SearchParams};
use serde_json::{json, Map, Value};

use crate::apis::{ApiError, CongressClient, Fetched, WebSearch};
use crate::relational::{RelationalError, RelationalStore};
use crate::trace_store::StatusPayload;
use crate::vector_store::VectorStore;

/// Everything the tool handlers read from.
pub struct ToolContext {
    pub vectors: Arc<VectorStore>,
    pub relational: Arc<RelationalStore>,
    pub embedder: Arc<dyn Embedder>,
    pub congress: Arc<CongressClient>,
    pub web: Arc<dyn WebSearch>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ToolOptions {
    /// Registers the `web_search` stub.
    pub web_search: bool,
    /// Registers `run_readonly_sql`; the store must also allow free SQL.
    pub free_sql: bool,
}

type Args = Map<String, Value>;

fn str_arg<'a>(args: &'a Args, name: &str) -> Result<&'a str, ToolError> {
    args.get(name)
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| ToolError::invalid(format!("{name} must be a non-empty string")))
}

fn u32_arg(args: &Args, name: &str) -> Result<u32, ToolError> {
    args.get(name)
        .and_then(Value::as_u64)
        .filter(|n| (1..=u64::from(u32::MAX)).contains(n))
        .map(|n| n as u32)
        .ok_or_else(|| ToolError::invalid(format!("{name} must be a positive integer")))
}

fn opt_u32(args: &Args, name: &str) -> Result<Option<u32>, ToolError> {
    match args.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(_) => u32_arg(args, name).map(Some),
    }
}

fn opt_f64(args: &Args, name: &str) -> Result<Option<f64>, ToolError> {
    match args.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| ToolError::invalid(format!("{name} must be a number"))),
    }
}

fn bill_arg(args: &Args) -> Result<BillId, ToolError> {
    let raw = str_arg(args, "bill_id")?;
    BillId::parse(raw).map_err(|e| {
        ToolError::invalid(format!("bill_id {raw:?}: {e}")).with_details(json!({"expected_format": "<congress>-<type>-<number>, e.g. 113-s-1"}))
    })
}

fn rel_err(e: RelationalError) -> ToolError {
    match e {
        RelationalError::NotFound { .. } => ToolError::not_found(e.to_string()),
        RelationalError::SqlDisabled => ToolError::new(ErrorKind::Configuration, e.to_string()),
        RelationalError::NotReadOnly => ToolError::invalid(e.to_string()),
        other => ToolError::new(ErrorKind::HandlerFailure, other.to_string()),
    }
}

/// Adds `http_retries` to an object payload when the request needed any.
fn with_retries<T>(fetched: &Fetched<T>, mut payload: Value) -> Value {
    if !fetched.retries.is_empty() {
        if let Value::Object(m) = &mut payload {
            m.insert("http_retries".into(), json!(fetched.retries));
        }
    }
    payload
}

fn api<T>(r: Result<Fetched<T>, ApiError>) -> Result<Fetched<T>, ToolError> {
    r.map_err(|e| e.to_tool_error())
}

fn search(
    ctx: &ToolContext,
    collection: Collection,
    query: &str,
    top_k: usize,
    threshold: f64,
    filter: MetadataFilter,
) -> Result<Vec<legis_core::SearchHit>, ToolError> {
    if top_k == 0 {
        return Err(ToolError::invalid("top_k must be at least 1"));
    }
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(ToolError::invalid(format!("threshold {threshold} outside [-1, 1]")));
    }
    let vector = ctx
        .embedder
        .embed_one(query)
        .map_err(|e| ToolError::new(ErrorKind::EmbeddingFailed, e.to_string()))?;
    ctx.vectors
        .search(collection, &vector, SearchParams::new(top_k, threshold), &filter)
        .map_err(|e| ToolError::new(ErrorKind::EmbeddingFailed, e.to_string()))
}

/// Runs `f`, turning a panic into a `handler_failure` error.
fn guarded<F>(f: F) -> impl Fn(&Args) -> Result<Value, ToolError> + Send + Sync
where
    F: Fn(&Args) -> Result<Value, ToolError> + Send + Sync,
{
    move |args| {
        catch_unwind(AssertUnwindSafe(|| f(args))).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            Err(ToolError::new(ErrorKind::HandlerFailure, format!("handler panicked: {msg}")))
        })
    }
}

/// Looks up enactment for one bill. Shared by the tool and the pipeline's
/// direct status checks.
pub fn bill_status(rel: &RelationalStore, id: &BillId) -> Result<StatusPayload, ToolError> {
    let s = rel.get_bill_status(id).map_err(rel_err)?;
    Ok(StatusPayload {
        bill_id: *id,
        enacted: s.enacted,
        status: s.status,
    })
}

pub fn default_registry(ctx: Arc<ToolContext>) -> Result<ToolRegistry, RegistryError> {
    build_registry(ctx, ToolOptions::default())
}

pub fn build_registry(ctx: Arc<ToolContext>, opts: ToolOptions) -> Result<ToolRegistry, RegistryError> {
    use ParamType::*;
    let mut r = ToolRegistry::new();

    let c = ctx.clone();
    r.register(
        ToolDefinition::new("get_bill_details", "Fetch title, sponsor, introduction date and latest action for a bill.")
            .param("bill_id", String, "Bill id such as 113-s-1", true),
        guarded(move |a| {
            let f = api(c.congress.get_bill_details(&bill_arg(a)?))?;
            Ok(with_retries(&f, json!(f.value)))
        }),
    )?;

    let c = ctx.clone();
    r.register(
        ToolDefinition::new("get_bill_actions", "Legislative history of a bill, oldest action first.")
            .param("bill_id", String, "Bill id such as 113-s-1", true),
        guarded(move |a| {
            let id = bill_arg(a)?;
            let f = api(c.congress.get_bill_actions(&id))?;
            Ok(with_retries(
                &f,
                json!({"bill_id": id, "count": f.value.len(), "actions": f.value}),
            ))
        }),
    )?;

    let c = ctx.clone();
    r.register(
        ToolDefinition::new("get_member_info", "Name, state, chamber, party by term and leadership roles of a member.")
            .param("bioguide_id", String, "Bioguide id of the member", true),
        guarded(move |a| {
            let f = api(c.congress.get_member_info(str_arg(a, "bioguide_id")?))?;
            Ok(with_retries(&f, json!(f.value)))
        }),
    )?;

    let c = ctx.clone();
    r.register(
        ToolDefinition::new("get_committee_assignments", "Committees a member served on in one Congress.")
            .param("bioguide_id", String, "Bioguide id of the member", true)
            .param("congress", Integer, "Congress number, e.g. 113", true),
        guarded(move |a| {
            let (id, congress) = (str_arg(a, "bioguide_id")?, u32_arg(a, "congress")?);
            let rows = c.relational.get_committee_assignments(id, congress).map_err(rel_err)?;
            Ok(json!({"bioguide_id": id, "congress": congress, "assignments": rows}))
        }),
    )?;

    let c = ctx.clone();
    r.register(
        ToolDefinition::new("get_les", "Legislative Effectiveness Score of a member in one Congress.")
            .param("bioguide_id", String, "Bioguide id of the member", true)
            .param("congress", Integer, "Congress number", true),
        guarded(move |a| {
            let (id, congress) = (str_arg(a, "bioguide_id")?, u32_arg(a, "congress")?);
            let les = c.relational.get_les(id, congress).map_err(rel_err)?;
            Ok(json!({"bioguide_id": id, "congress": congress, "les": les}))
        }),
    )?;

    let c = ctx.clone();
    r.register(
        ToolDefinition::new("get_nominate_score", "Two-dimensional NOMINATE ideal point of a member in one Congress.")
            .param("bioguide_id", String, "Bioguide id of the member", true)
            .param("congress", Integer, "Congress number", true),
        guarded(move |a| {
            let (id, congress) = (str_arg(a, "bioguide_id")?, u32_arg(a, "congress")?);
            let s = c.relational.get_nominate_score(id, congress).map_err(rel_err)?;
            Ok(json!({"bioguide_id": id, "congress": congress, "dim1": s.dim1, "dim2": s.dim2}))
        }),
    )?;

    let c = ctx.clone();
    r.register(
        ToolDefinition::new("get_roll_call_summary", "Recorded votes on a bill with yea and nay counts.")
            .param("bill_id", String, "Bill id such as 113-hr-2642", true),
        guarded(move |a| {
            let id = bill_arg(a)?;
            let rows = c.relational.get_roll_call_summary(&id).map_err(rel_err)?;
            Ok(json!({"bill_id": id, "roll_calls": rows}))
        }),
    )?;

    let c = ctx.clone();
    r.register(
        ToolDefinition::new(
            "search_article_archives",
            "Semantic search over news article headlines and abstracts published in a range of years.",
        )
        .param("query", String, "What the articles should be about", true)
        .param("start_year", Integer, "First publication year", true)
        .param("end_year", Integer, "Last publication year (defaults to start_year)", false)
        .param("top_k", Integer, "Maximum hits (default 200)", false)
        .param("threshold", Number, "Minimum cosine similarity (default 0.4)", false),
        guarded(move |a| {
            let query = str_arg(a, "query")?;
            let start = u32_arg(a, "start_year")?;
            let end = opt_u32(a, "end_year")?.unwrap_or(start);
            if end < start {
                return Err(ToolError::invalid("end_year is before start_year"));
            }
            let top_k = opt_u32(a, "top_k")?.map_or(DEFAULT_ARTICLE_TOP_K, |k| k as usize);
            let threshold = opt_f64(a, "threshold")?.unwrap_or(DEFAULT_THRESHOLD);
            let filter = MetadataFilter::none().with(Condition::int_range("year", i64::from(start), i64::from(end)));
            let hits = search(&c, Collection::Articles, query, top_k, threshold, filter)?;
            let hits: Vec<Value> = hits
                .into_iter()
                .map(|h| {
                    json!({
                        "doc_id": h.doc_id,
                        "score": h.score,
                        "headline": h.metadata.get("headline"),
                        "url": h.metadata.get("url"),
                        "year": h.metadata.get("year"),
                        "month": h.metadata.get("month"),
                        "text": h.text,
                    })
                })
                .collect();
            Ok(json!({"query": query, "threshold": threshold, "top_k": top_k, "count": hits.len(), "hits": hits}))
        }),
    )?;

    let c = ctx.clone();
    r.register(
        ToolDefinition::new("search_bill_summaries", "Semantic search over summaries of bills introduced in one Congress.")
            .param("query", String, "Policy topic to match", true)
            .param("congress", Integer, "Congress number", true)
            .param("top_k", Integer, "Maximum hits (default 100)", false)
            .param("threshold", Number, "Minimum cosine similarity (default 0.4)", false),
        guarded(move |a| {
            let query = str_arg(a, "query")?;
            let congress = u32_arg(a, "congress")?;
            let top_k = opt_u32(a, "top_k")?.map_or(DEFAULT_BILL_TOP_K, |k| k as usize);
            let threshold = opt_f64(a, "threshold")?.unwrap_or(DEFAULT_THRESHOLD);
            let filter = MetadataFilter::none().with(Condition::equals("congress", congress));
            let hits = search(&c, Collection::Bills, query, top_k, threshold, filter)?;
            let hits: Vec<Value> = hits
                .into_iter()
                .map(|h| {
                    json!({
                        "bill_id": h.doc_id,
                        "score": h.score,
                        "title": h.metadata.get("title").cloned().unwrap_or_default(),
                        "summary": h.text,
                    })
                })
                .collect();
            Ok(json!({
                "query": query,
                "congress": congress,
                "threshold": threshold,
                "top_k": top_k,
                "count": hits.len(),
                "hits": hits,
            }))
        }),
    )?;

    let c = ctx.clone();
    r.register(
        ToolDefinition::new("get_bill_status", "Whether a bill was enacted into law.")
            .param("bill_id", String, "Bill id such as 113-s-1", true),
        guarded(move |a| Ok(json!(bill_status(&c.relational, &bill_arg(a)?)?))),
    )?;

    if opts.web_search {
        let c = ctx.clone();
        r.register(
            ToolDefinition::new("web_search", "General web search.").param("query", String, "Search terms", true),
            guarded(move |a| c.web.search(str_arg(a, "query")?)),
        )?;
    }

    if opts.free_sql {
        let c = ctx.clone();
        r.register(
            ToolDefinition::new(
                "run_readonly_sql",
                "Run one read-only SELECT over tables bill_status, committee_assignments, member_scores, roll_calls.",
            )
            .param("query", String, "A single SELECT statement", true),
            guarded(move |a| {
                let rows = c.relational.run_readonly_sql(str_arg(a, "query")?).map_err(rel_err)?;
                Ok(json!({"row_count": rows.len(), "rows": rows}))
            }),
        )?;
    }

    Ok(r)
}

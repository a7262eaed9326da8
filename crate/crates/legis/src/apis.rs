//! Clients for the congress.gov-style v3 API, the archive-style article API and
//! the web-search stub.
//!
//! Endpoint paths are relative to the configured base URL:
//!
//! - `GET /bill/{congress}/{billType}/{billNumber}`
//! - `GET /bill/{congress}/{billType}/{billNumber}/actions?offset=&limit=250`
//! - `GET /member/{bioguideId}`
//! - `GET /svc/archive/v1/{year}/{month}.json`
//!
//! Without an API key a client only works over a cassette transport; against a
//! live transport it reports a configuration error naming the missing variable.

use std::sync::Arc;

use legis_core::agent::{ErrorKind, ToolError};
use legis_core::model::{BillId, BillRecord, Chamber, MemberRecord, Term};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::http::{send_with_retry, HttpRequest, HttpResponse, RateLimiter, RetryPolicy, RetryRecord, Sleeper, Transport};

pub const CONGRESS_KEY_VAR: &str = "CONGRESS_API_KEY";
pub const ARCHIVE_KEY_VAR: &str = "ARCHIVE_API_KEY";
pub const ACTIONS_PAGE_SIZE: usize = 250;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ApiError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("unexpected HTTP {status} from {path}")]
    Status { status: u16, path: String },
    #[error("response from {path} did not match the expected schema: {message}")]
    Decode { path: String, message: String, raw: String },
    #[error("{0}")]
    Configuration(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl ApiError {
    pub fn to_tool_error(&self) -> ToolError {
        let kind = match self {
            ApiError::NotFound(_) => ErrorKind::NotFound,
            ApiError::Transport { .. } | ApiError::Status { .. } => ErrorKind::Transport,
            ApiError::Decode { .. } => ErrorKind::Decode,
            ApiError::Configuration(_) => ErrorKind::Configuration,
            ApiError::Invalid(_) => ErrorKind::InvalidArguments,
        };
        let err = ToolError::new(kind, self.to_string());
        match self {
            ApiError::Decode { raw, .. } => err.with_details(json!({ "raw": truncate(raw, 4096) })),
            ApiError::Transport { attempts, .. } => err.with_details(json!({ "attempts": attempts })),
            _ => err,
        }
    }
}

fn truncate(s: &str, max: usize) -> &str {
    if s.len() <= max {
        return s;
    }
    let mut end = max;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    &s[..end]
}

/// Shared request machinery: key injection, rate limiting, retries.
pub struct ApiCore {
    transport: Arc<dyn Transport>,
    api_key: Option<String>,
    key_var: &'static str,
    live: bool,
    retry: RetryPolicy,
    sleeper: Arc<dyn Sleeper>,
    limiter: Option<Arc<RateLimiter>>,
}

/// A successful response together with the retries it needed.
#[derive(Debug)]
pub struct Fetched<T> {
    pub value: T,
    pub retries: Vec<RetryRecord>,
}

impl ApiCore {
    /// `live` marks a transport that reaches the network and therefore needs the key.
    pub fn new(
        transport: Arc<dyn Transport>,
        live: bool,
        api_key: Option<String>,
        key_var: &'static str,
        sleeper: Arc<dyn Sleeper>,
    ) -> Self {
        ApiCore {
            transport,
            api_key: api_key.filter(|k| !k.is_empty()),
            key_var,
            live,
            retry: RetryPolicy::default(),
            sleeper,
            limiter: None,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_limiter(mut self, limiter: Arc<RateLimiter>) -> Self {
        self.limiter = Some(limiter);
        self
    }

    fn get(&self, request: HttpRequest, key_param: &str) -> Result<Fetched<HttpResponse>, ApiError> {
        let request = match (&self.api_key, self.live) {
            (Some(k), _) => request.param(key_param, k),
            (None, true) => {
                return Err(ApiError::Configuration(format!(
                    "{} is not set; live API access needs it (or use a cassette directory)",
                    self.key_var
                )))
            }
            (None, false) => request,
        };
        if let Some(l) = &self.limiter {
            l.acquire();
        }
        let sent = send_with_retry(self.transport.as_ref(), &request, self.retry, self.sleeper.as_ref());
        let resp = sent.result.map_err(|e| ApiError::Transport {
            message: e.to_string(),
            attempts: sent.attempts,
        })?;
        match resp.status {
            200..=299 => Ok(Fetched {
                value: resp,
                retries: sent.retries,
            }),
            404 => Err(ApiError::NotFound(request.path.clone())),
            401 | 403 => Err(ApiError::Configuration(format!(
                "{} was rejected (HTTP {}); check {}",
                request.path, resp.status, self.key_var
            ))),
            s if resp.is_retryable() => Err(ApiError::Transport {
                message: format!("HTTP {s} from {}", request.path),
                attempts: sent.attempts,
            }),
            s => Err(ApiError::Status {
                status: s,
                path: request.path.clone(),
            }),
        }
    }

    fn get_json<T: for<'de> Deserialize<'de>>(&self, request: HttpRequest, key_param: &str) -> Result<Fetched<T>, ApiError> {
        let path = request.path.clone();
        let fetched = self.get(request, key_param)?;
        let value = serde_json::from_str(&fetched.value.body).map_err(|e| ApiError::Decode {
            path,
            message: e.to_string(),
            raw: fetched.value.body.clone(),
        })?;
        Ok(Fetched {
            value,
            retries: fetched.retries,
        })
    }
}

/// Path segment used by the API for each bill type.
pub fn bill_path(id: &BillId) -> String {
    format!("/bill/{}/{}/{}", id.congress, id.bill_type.as_str(), id.bill_number)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BillAction {
    pub date: String,
    pub action_text: String,
}

pub struct CongressClient {
    core: ApiCore,
}

#[derive(Deserialize)]
struct BillEnvelope {
    bill: BillBody,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct BillBody {
    title: String,
    introduced_date: String,
    #[serde(default)]
    sponsors: Vec<Sponsor>,
    #[serde(default)]
    latest_action: Option<ActionBody>,
    #[serde(default)]
    laws: Vec<Value>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Sponsor {
    bioguide_id: String,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ActionBody {
    action_date: String,
    text: String,
}

#[derive(Deserialize)]
struct ActionsEnvelope {
    #[serde(default)]
    actions: Vec<ActionBody>,
    #[serde(default)]
    pagination: Option<Pagination>,
}

#[derive(Deserialize)]
struct Pagination {
    count: usize,
}

#[derive(Deserialize)]
struct MemberEnvelope {
    member: MemberBody,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct MemberBody {
    bioguide_id: String,
    #[serde(default)]
    direct_order_name: Option<String>,
    #[serde(default)]
    first_name: Option<String>,
    #[serde(default)]
    last_name: Option<String>,
    state: String,
    #[serde(default)]
    terms: Vec<TermBody>,
    #[serde(default)]
    leadership: Vec<LeadershipBody>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct TermBody {
    chamber: String,
    congress: u32,
    #[serde(default)]
    party_name: Option<String>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct LeadershipBody {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    congress: Option<u32>,
}

impl CongressClient {
    pub fn new(core: ApiCore) -> Self {
        CongressClient { core }
    }

    fn request(path: String) -> HttpRequest {
        HttpRequest::get(path).param("format", "json")
    }

    pub fn get_bill_details(&self, id: &BillId) -> Result<Fetched<BillRecord>, ApiError> {
        let path = bill_path(id);
        let fetched: Fetched<Value> = self.core.get_json(Self::request(path.clone()), "api_key")?;
        let raw = fetched.value.to_string();
        let body: BillEnvelope = serde_json::from_value(fetched.value).map_err(|e| ApiError::Decode {
            path: path.clone(),
            message: e.to_string(),
            raw: raw.clone(),
        })?;
        let b = body.bill;
        let enacted = !b.laws.is_empty();
        let status_text = if enacted {
            "Became Public Law".to_string()
        } else {
            b.latest_action.map(|a| a.text).unwrap_or_default()
        };
        let record = BillRecord {
            id: *id,
            title: b.title,
            summary: String::new(),
            introduced_date: b.introduced_date,
            sponsor_bioguide_ids: b.sponsors.into_iter().map(|s| s.bioguide_id).collect(),
            enacted,
            status_text,
        };
        record.validate().map_err(|e| ApiError::Decode {
            path,
            message: e.to_string(),
            raw,
        })?;
        Ok(Fetched {
            value: record,
            retries: fetched.retries,
        })
    }

    /// Every action on the bill, oldest first, draining all pages.
    pub fn get_bill_actions(&self, id: &BillId) -> Result<Fetched<Vec<BillAction>>, ApiError> {
        let path = format!("{}/actions", bill_path(id));
        let mut actions = Vec::new();
        let mut retries = Vec::new();
        let mut offset = 0usize;
        loop {
            let req = Self::request(path.clone())
                .param("offset", offset)
                .param("limit", ACTIONS_PAGE_SIZE);
            let page: Fetched<ActionsEnvelope> = match self.core.get_json(req, "api_key") {
                Ok(p) => p,
                Err(ApiError::NotFound(_)) if offset > 0 => break,
                Err(e) => return Err(e),
            };
            retries.extend(page.retries);
            let n = page.value.actions.len();
            actions.extend(page.value.actions.into_iter().map(|a| BillAction {
                date: a.action_date,
                action_text: a.text,
            }));
            offset += n;
            let total = page.value.pagination.map(|p| p.count);
            if n == 0 || total.is_some_and(|t| offset >= t) || (total.is_none() && n < ACTIONS_PAGE_SIZE) {
                break;
            }
        }
        actions.sort_by(|a, b| a.date.cmp(&b.date));
        Ok(Fetched { value: actions, retries })
    }

    pub fn get_member_info(&self, bioguide_id: &str) -> Result<Fetched<MemberRecord>, ApiError> {
        if bioguide_id.trim().is_empty() || !bioguide_id.chars().all(|c| c.is_ascii_alphanumeric()) {
            return Err(ApiError::Invalid(format!("bioguide_id {bioguide_id:?} is malformed")));
        }
        let path = format!("/member/{bioguide_id}");
        let fetched: Fetched<Value> = self.core.get_json(Self::request(path.clone()), "api_key")?;
        let raw = fetched.value.to_string();
        let decode = |message: String| ApiError::Decode {
            path: path.clone(),
            message,
            raw: raw.clone(),
        };
        let m: MemberEnvelope = serde_json::from_value(fetched.value).map_err(|e| decode(e.to_string()))?;
        let m = m.member;
        let state = state_code(&m.state).ok_or_else(|| decode(format!("unknown state {:?}", m.state)))?;
        let mut terms: Vec<(Chamber, Term)> = m
            .terms
            .iter()
            .map(|t| {
                let chamber = if t.chamber.to_ascii_lowercase().contains("senate") {
                    Chamber::Senate
                } else {
                    Chamber::House
                };
                (
                    chamber,
                    Term {
                        congress: t.congress,
                        party: t.party_name.clone().unwrap_or_default(),
                    },
                )
            })
            .collect();
        terms.sort_by_key(|(_, t)| t.congress);
        let chamber = terms.last().map(|(c, _)| *c).ok_or_else(|| decode("member has no terms".into()))?;
        let name = m
            .direct_order_name
            .or_else(|| match (m.first_name, m.last_name) {
                (Some(f), Some(l)) => Some(format!("{f} {l}")),
                (f, l) => f.or(l),
            })
            .unwrap_or_default();
        let record = MemberRecord {
            bioguide_id: m.bioguide_id,
            name,
            state,
            chamber,
            terms: terms.into_iter().map(|(_, t)| t).collect(),
            leadership: m
                .leadership
                .into_iter()
                .map(|l| match l.congress {
                    Some(c) => format!("{} ({c})", l.kind),
                    None => l.kind,
                })
                .collect(),
        };
        record.validate().map_err(|e| decode(e.to_string()))?;
        Ok(Fetched {
            value: record,
            retries: fetched.retries,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveArticle {
    pub headline: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub pub_date: String,
    pub url: String,
}

#[derive(Deserialize)]
struct ArchiveEnvelope {
    response: ArchiveResponse,
}

#[derive(Deserialize)]
struct ArchiveResponse {
    #[serde(default)]
    docs: Vec<ArchiveDoc>,
}

#[derive(Deserialize)]
struct ArchiveDoc {
    #[serde(default)]
    headline: Option<Headline>,
    #[serde(default, rename = "abstract")]
    abstract_text: Option<String>,
    #[serde(default)]
    pub_date: Option<String>,
    web_url: String,
}

#[derive(Deserialize)]
struct Headline {
    #[serde(default)]
    main: Option<String>,
}

pub struct ArchiveClient {
    core: ApiCore,
}

impl ArchiveClient {
    pub fn new(core: ApiCore) -> Self {
        ArchiveClient { core }
    }

    /// Every article published in one month.
    pub fn fetch_article_archive(&self, year: u32, month: u32) -> Result<Fetched<Vec<ArchiveArticle>>, ApiError> {
        if !(1..=12).contains(&month) {
            return Err(ApiError::Invalid(format!("month {month} outside 1..=12")));
        }
        let req = HttpRequest::get(format!("/svc/archive/v1/{year}/{month}.json"));
        let fetched: Fetched<ArchiveEnvelope> = self.core.get_json(req, "api-key")?;
        let articles = fetched
            .value
            .response
            .docs
            .into_iter()
            .map(|d| ArchiveArticle {
                headline: d.headline.and_then(|h| h.main).unwrap_or_default(),
                abstract_text: d.abstract_text.unwrap_or_default(),
                pub_date: d.pub_date.unwrap_or_default(),
                url: d.web_url,
            })
            .collect();
        Ok(Fetched {
            value: articles,
            retries: fetched.retries,
        })
    }
}

/// Pluggable web search. The bundled implementation is a stub.
pub trait WebSearch: Send + Sync {
    fn search(&self, query: &str) -> Result<Value, ToolError>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct UnavailableWebSearch;

impl WebSearch for UnavailableWebSearch {
    fn search(&self, query: &str) -> Result<Value, ToolError> {
        Err(ToolError::new(ErrorKind::Unavailable, "web search is not configured in this deployment")
            .with_details(json!({ "query": query })))
    }
}

const STATES: &[(&str, &str)] = &[
    ("AL", "Alabama"),
    ("AK", "Alaska"),
    ("AZ", "Arizona"),
    ("AR", "Arkansas"),
    ("CA", "California"),
    ("CO", "Colorado"),
    ("CT", "Connecticut"),
    ("DE", "Delaware"),
    ("FL", "Florida"),
    ("GA", "Georgia"),
    ("HI", "Hawaii"),
    ("ID", "Idaho"),
    ("IL", "Illinois"),
    ("IN", "Indiana"),
    ("IA", "Iowa"),
    ("KS", "Kansas"),
    ("KY", "Kentucky"),
    ("LA", "Louisiana"),
    ("ME", "Maine"),
    ("MD", "Maryland"),
    ("MA", "Massachusetts"),
    ("MI", "Michigan"),
    ("MN", "Minnesota"),
    ("MS", "Mississippi"),
    ("MO", "Missouri"),
    ("MT", "Montana"),
    ("NE", "Nebraska"),
    ("NV", "Nevada"),
    ("NH", "New Hampshire"),
    ("NJ", "New Jersey"),
    ("NM", "New Mexico"),
    ("NY", "New York"),
    ("NC", "North Carolina"),
    ("ND", "North Dakota"),
    ("OH", "Ohio"),
    ("OK", "Oklahoma"),
    ("OR", "Oregon"),
    ("PA", "Pennsylvania"),
    ("RI", "Rhode Island"),
    ("SC", "South Carolina"),
    ("SD", "South Dakota"),
    ("TN", "Tennessee"),
    ("TX", "Texas"),
    ("UT", "Utah"),
    ("VT", "Vermont"),
    ("VA", "Virginia"),
    ("WA", "Washington"),
    ("WV", "West Virginia"),
    ("WI", "Wisconsin"),
    ("WY", "Wyoming"),
    ("DC", "District of Columbia"),
    ("PR", "Puerto Rico"),
    ("GU", "Guam"),
    ("VI", "Virgin Islands"),
    ("AS", "American Samoa"),
    ("MP", "Northern Mariana Islands"),
];

/// Two-letter code for a state name or code.
pub fn state_code(s: &str) -> Option<String> {
    let s = s.trim();
    STATES
        .iter()
        .find(|(code, name)| code.eq_ignore_ascii_case(s) || name.eq_ignore_ascii_case(s))
        .map(|(code, _)| code.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::{CassetteTransport, ManualClock};

    fn core(dir: &std::path::Path, clock: Arc<ManualClock>) -> ApiCore {
        ApiCore::new(
            Arc::new(CassetteTransport::new(dir)),
            false,
            None,
            CONGRESS_KEY_VAR,
            clock,
        )
    }

    fn record(dir: &std::path::Path, req: HttpRequest, responses: Vec<HttpResponse>) {
        CassetteTransport::record(dir, &req, responses).unwrap();
    }

    #[test]
    fn bill_details_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let id = BillId::parse("113-s-1").unwrap();
        let body = json!({"bill": {"title": "A bill", "introducedDate": "2013-01-22",
            "sponsors": [{"bioguideId": "R000146"}], "latestAction": {"actionDate": "2013-01-22", "text": "Read twice."}}});
        record(
            dir.path(),
            HttpRequest::get("/bill/113/s/1").param("format", "json"),
            vec![HttpResponse::new(429, ""), HttpResponse::new(200, body.to_string())],
        );
        let clock = Arc::new(ManualClock::new());
        let client = CongressClient::new(core(dir.path(), clock.clone()));
        let got = client.get_bill_details(&id).unwrap();
        assert_eq!(got.value.sponsor_bioguide_ids, vec!["R000146"]);
        assert!(!got.value.enacted);
        assert_eq!(got.retries.len(), 1);
        assert_eq!(clock.sleeps(), vec![std::time::Duration::from_secs(1)]);

        record(
            dir.path(),
            HttpRequest::get("/bill/113/hr/9").param("format", "json"),
            vec![HttpResponse::new(404, "")],
        );
        let err = client.get_bill_details(&BillId::parse("113-hr-9").unwrap()).unwrap_err();
        assert_eq!(err.to_tool_error().kind, ErrorKind::NotFound);

        record(
            dir.path(),
            HttpRequest::get("/bill/113/hr/10").param("format", "json"),
            vec![HttpResponse::new(200, "{\"bill\": {\"name\": 3}}")],
        );
        let err = client.get_bill_details(&BillId::parse("113-hr-10").unwrap()).unwrap_err();
        assert!(matches!(&err, ApiError::Decode { raw, .. } if raw.contains("name")));
    }

    #[test]
    fn live_transport_without_key_is_configuration_error() {
        let dir = tempfile::tempdir().unwrap();
        let api = ApiCore::new(
            Arc::new(CassetteTransport::new(dir.path())),
            true,
            None,
            ARCHIVE_KEY_VAR,
            Arc::new(ManualClock::new()),
        );
        let err = ArchiveClient::new(api).fetch_article_archive(2013, 1).unwrap_err();
        assert!(matches!(&err, ApiError::Configuration(m) if m.contains(ARCHIVE_KEY_VAR)));
    }

    #[test]
    fn state_names_map_to_codes() {
        assert_eq!(state_code("Vermont").as_deref(), Some("VT"));
        assert_eq!(state_code("ny").as_deref(), Some("NY"));
        assert_eq!(state_code("Atlantis"), None);
    }

    #[test]
    fn web_search_stub_is_unavailable() {
        let err = UnavailableWebSearch.search("anything").unwrap_err();
        assert_eq!(err.kind, ErrorKind::Unavailable);
    }
}

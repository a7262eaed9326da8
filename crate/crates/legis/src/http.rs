//! Minimal HTTP plumbing shared by the API clients and model providers:
//! a transport trait with live and cassette implementations, retry with
//! exponential backoff, and a sliding-window rate limiter.
//!
//! Cassette layout: `<dir>/<key>.json`, where `key` is the first 16 hex digits
//! of SHA-256 over `"{METHOD} {path}?{sorted query}"` with credential parameters
//! removed. Each file holds
//!
//! ```json
//! {"request": {"method": "GET", "path": "/bill/113/s/1", "query": [["format", "json"]]},
//!  "responses": [{"status": 429, "headers": {}, "body": "..."}, {"status": 200, ...}]}
//! ```
//!
//! Successive requests with the same key replay successive responses; the last
//! one repeats once the list is exhausted.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Query parameters that carry credentials; never part of a cassette key.
pub const CREDENTIAL_PARAMS: &[&str] = &["api_key", "api-key", "apikey", "key", "token"];

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpRequest {
    pub method: String,
    pub path: String,
    #[serde(default)]
    pub query: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
    #[serde(skip)]
    pub headers: Vec<(String, String)>,
}

impl HttpRequest {
    pub fn get(path: impl Into<String>) -> Self {
        HttpRequest {
            method: "GET".into(),
            path: path.into(),
            query: Vec::new(),
            body: None,
            headers: Vec::new(),
        }
    }

    pub fn post_json(path: impl Into<String>, body: &serde_json::Value) -> Self {
        HttpRequest {
            method: "POST".into(),
            path: path.into(),
            query: Vec::new(),
            body: Some(body.to_string()),
            headers: vec![("content-type".into(), "application/json".into())],
        }
    }

    pub fn param(mut self, k: impl Into<String>, v: impl ToString) -> Self {
        self.query.push((k.into(), v.to_string()));
        self
    }

    pub fn header(mut self, k: impl Into<String>, v: impl Into<String>) -> Self {
        self.headers.push((k.into(), v.into()));
        self
    }

    /// Stable identity of the request, ignoring credentials and parameter order.
    /// POST bodies are part of the key.
    pub fn cassette_key(&self) -> String {
        let mut query: Vec<&(String, String)> = self
            .query
            .iter()
            .filter(|(k, _)| !CREDENTIAL_PARAMS.contains(&k.to_ascii_lowercase().as_str()))
            .collect();
        query.sort();
        let q = query
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join("&");
        let mut h = Sha256::new();
        h.update(format!("{} {}?{}", self.method.to_ascii_uppercase(), self.path, q));
        if let Some(body) = &self.body {
            h.update(b"\n");
            h.update(body.as_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }

    /// The request as it may be written to disk or a trace.
    pub fn redacted(&self) -> HttpRequest {
        HttpRequest {
            method: self.method.clone(),
            path: self.path.clone(),
            query: self
                .query
                .iter()
                .filter(|(k, _)| !CREDENTIAL_PARAMS.contains(&k.to_ascii_lowercase().as_str()))
                .cloned()
                .collect(),
            body: self.body.clone(),
            headers: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpResponse {
    pub status: u16,
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    #[serde(default)]
    pub body: String,
}

impl HttpResponse {
    pub fn new(status: u16, body: impl Into<String>) -> Self {
        HttpResponse {
            status,
            headers: BTreeMap::new(),
            body: body.into(),
        }
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    /// 429 and 5xx are worth retrying.
    pub fn is_retryable(&self) -> bool {
        self.status == 429 || (500..600).contains(&self.status)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("no cassette for {method} {path} (key {key}) in {dir}")]
    MissingCassette {
        method: String,
        path: String,
        key: String,
        dir: String,
    },
    #[error("cassette {path} is unreadable: {message}")]
    BadCassette { path: String, message: String },
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

/// Live HTTPS transport with a per-request timeout.
pub struct LiveTransport {
    base_url: String,
    client: reqwest::blocking::Client,
}

impl LiveTransport {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Connect(e.to_string()))?;
        Ok(LiveTransport {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client,
        })
    }
}

impl Transport for LiveTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let url = format!("{}{}", self.base_url, request.path);
        let method = reqwest::Method::from_bytes(request.method.as_bytes())
            .map_err(|e| TransportError::Connect(e.to_string()))?;
        let mut builder = self.client.request(method, url).query(&request.query);
        for (k, v) in &request.headers {
            builder = builder.header(k, v);
        }
        if let Some(body) = &request.body {
            builder = builder.body(body.clone());
        }
        let resp = builder.send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Connect(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        let headers = resp
            .headers()
            .iter()
            .filter(|(k, _)| matches!(k.as_str(), "content-type" | "retry-after"))
            .filter_map(|(k, v)| Some((k.to_string(), v.to_str().ok()?.to_string())))
            .collect();
        let body = resp.text().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Connect(e.to_string())
            }
        })?;
        Ok(HttpResponse { status, headers, body })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cassette {
    pub request: HttpRequest,
    pub responses: Vec<HttpResponse>,
}

/// Replays recorded responses from a cassette directory.
pub struct CassetteTransport {
    dir: PathBuf,
    cursors: Mutex<HashMap<String, usize>>,
}

impl CassetteTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        CassetteTransport {
            dir: dir.into(),
            cursors: Mutex::new(HashMap::new()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, request: &HttpRequest) -> PathBuf {
        self.dir.join(format!("{}.json", request.cassette_key()))
    }

    /// Writes a cassette for `request`; used by recorders and tests.
    pub fn record(dir: &Path, request: &HttpRequest, responses: Vec<HttpResponse>) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.json", request.cassette_key()));
        let cassette = Cassette {
            request: request.redacted(),
            responses,
        };
        std::fs::write(&path, serde_json::to_vec_pretty(&cassette)?)?;
        Ok(path)
    }
}

impl Transport for CassetteTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let key = request.cassette_key();
        let path = self.dir.join(format!("{key}.json"));
        let text = std::fs::read_to_string(&path).map_err(|_| TransportError::MissingCassette {
            method: request.method.clone(),
            path: request.path.clone(),
            key: key.clone(),
            dir: self.dir.display().to_string(),
        })?;
        let cassette: Cassette = serde_json::from_str(&text).map_err(|e| TransportError::BadCassette {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if cassette.responses.is_empty() {
            return Err(TransportError::BadCassette {
                path: path.display().to_string(),
                message: "no responses".into(),
            });
        }
        let mut cursors = self.cursors.lock().expect("cassette cursor poisoned");
        let i = cursors.entry(key).or_insert(0);
        let resp = cassette.responses[(*i).min(cassette.responses.len() - 1)].clone();
        *i += 1;
        Ok(resp)
    }
}

/// Blocks the calling thread; mockable so tests run at full speed.
pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// A clock readable as an offset from an arbitrary origin.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
}

pub struct SystemClock {
    origin: std::time::Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock {
            origin: std::time::Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }
}

/// Virtual time: sleeping advances the clock instantly and records the delay.
#[derive(Debug, Default)]
pub struct ManualClock {
    now: Mutex<Duration>,
    sleeps: Mutex<Vec<Duration>>,
}

impl ManualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.sleeps.lock().unwrap().clone()
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }
}

impl Sleeper for ManualClock {
    fn sleep(&self, d: Duration) {
        self.sleeps.lock().unwrap().push(d);
        self.advance(d);
    }
}

impl<T: Clock + ?Sized> Clock for std::sync::Arc<T> {
    fn now(&self) -> Duration {
        (**self).now()
    }
}

impl<T: Sleeper + ?Sized> Sleeper for std::sync::Arc<T> {
    fn sleep(&self, d: Duration) {
        (**self).sleep(d)
    }
}

/// Exponential backoff: `retries` extra attempts after the first, waiting
/// `base * factor^i` before retry `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base: Duration,
    pub factor: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            retries: 3,
            base: Duration::from_secs(1),
            factor: 2,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            retries: 0,
            ..Self::default()
        }
    }

    pub fn delay(&self, retry: u32) -> Duration {
        self.base * self.factor.pow(retry)
    }

    pub fn delays(&self) -> Vec<Duration> {
        (0..self.retries).map(|i| self.delay(i)).collect()
    }
}

/// What happened on one retried attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RetryRecord {
    pub attempt: u32,
    /// HTTP status of the failed attempt, or absent for a transport error.
    pub status: Option<u16>,
    pub error: Option<String>,
    pub delay_ms: u64,
}

/// Final outcome of a retried request plus the retries it took.
#[derive(Debug)]
pub struct Sent {
    pub result: Result<HttpResponse, TransportError>,
    pub attempts: u32,
    pub retries: Vec<RetryRecord>,
}

/// Sends `request`, retrying 429/5xx responses and transport failures.
/// Any other response (including 4xx) is returned as-is.
pub fn send_with_retry(
    transport: &dyn Transport,
    request: &HttpRequest,
    policy: RetryPolicy,
    sleeper: &dyn Sleeper,
) -> Sent {
    let mut retries = Vec::new();
    let mut attempt = 0;
    loop {
        attempt += 1;
        let result = transport.send(request);
        let retryable = match &result {
            Ok(r) => r.is_retryable(),
            Err(TransportError::Timeout | TransportError::Connect(_)) => true,
            Err(_) => false,
        };
        let retry_index = attempt - 1;
        if !retryable || retry_index >= policy.retries {
            return Sent {
                result,
                attempts: attempt,
                retries,
            };
        }
        let delay = policy.delay(retry_index);
        retries.push(RetryRecord {
            attempt,
            status: result.as_ref().ok().map(|r| r.status),
            error: result.as_ref().err().map(|e| e.to_string()),
            delay_ms: delay.as_millis() as u64,
        });
        sleeper.sleep(delay);
    }
}

/// Sliding-window limiter: at most `limit` acquisitions in any window of length
/// `period`. Callers block until the oldest acquisition in the window expires.
pub struct RateLimiter {
    limit: usize,
    period: Duration,
    clock: Box<dyn Clock>,
    sleeper: Box<dyn Sleeper>,
    issued: Mutex<std::collections::VecDeque<Duration>>,
}

impl RateLimiter {
    pub fn new(limit: u32, period: Duration, clock: Box<dyn Clock>, sleeper: Box<dyn Sleeper>) -> Self {
        assert!(limit > 0, "rate limit must be positive");
        RateLimiter {
            limit: limit as usize,
            period,
            clock,
            sleeper,
            issued: Mutex::new(std::collections::VecDeque::new()),
        }
    }

    pub fn per_minute(requests: u32) -> Self {
        Self::new(
            requests,
            Duration::from_secs(60),
            Box::new(SystemClock::default()),
            Box::new(ThreadSleeper),
        )
    }

    /// Records one request, sleeping first if the window is full.
    pub fn acquire(&self) {
        let mut issued = self.issued.lock().expect("rate limiter poisoned");
        loop {
            let now = self.clock.now();
            while issued.front().is_some_and(|t| now.saturating_sub(*t) >= self.period) {
                issued.pop_front();
            }
            if issued.len() < self.limit {
                issued.push_back(now);
                return;
            }
            let oldest = *issued.front().expect("window is full");
            self.sleeper.sleep((oldest + self.period).saturating_sub(now));
        }
    }
}

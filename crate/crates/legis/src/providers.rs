//! Chat and embedding providers that talk HTTP, plus the recorded embedder used
//! for offline replay.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;

use legis_core::agent::{AssistantStep, ChatProvider, Message, ProviderError, Role, ToolCall, ToolDefinition};
use legis_core::embed::{EmbedError, Embedder, Embedding};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::http::{send_with_retry, HttpRequest, RetryPolicy, Sleeper, Transport, TransportError};

pub const PROVIDER_TOKEN_VAR: &str = "AGENT_PROVIDER_TOKEN";

/// Chat-completions client (OpenAI-compatible wire format).
pub struct HttpChatProvider {
    transport: Arc<dyn Transport>,
    model: String,
    token: Option<String>,
    retry: RetryPolicy,
    sleeper: Arc<dyn Sleeper>,
}

impl HttpChatProvider {
    pub fn new(transport: Arc<dyn Transport>, model: impl Into<String>, token: Option<String>, sleeper: Arc<dyn Sleeper>) -> Self {
        HttpChatProvider {
            transport,
            model: model.into(),
            token,
            retry: RetryPolicy::default(),
            sleeper,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

fn wire_message(m: &Message) -> Value {
    let role = match m.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    };
    let mut obj = Map::new();
    obj.insert("role".into(), role.into());
    obj.insert("content".into(), m.content.clone().into());
    if !m.tool_calls.is_empty() {
        let calls: Vec<Value> = m
            .tool_calls
            .iter()
            .map(|c| {
                json!({
                    "id": c.call_id,
                    "type": "function",
                    "function": {"name": c.tool_name, "arguments": Value::Object(c.arguments.clone()).to_string()},
                })
            })
            .collect();
        obj.insert("tool_calls".into(), calls.into());
    }
    if let Some(id) = &m.tool_call_id {
        obj.insert("tool_call_id".into(), id.clone().into());
    }
    Value::Object(obj)
}

/// Builds the request body; exposed for tests.
pub fn chat_request_body(model: &str, messages: &[Message], tools: &[ToolDefinition]) -> Value {
    let mut body = json!({
        "model": model,
        "messages": messages.iter().map(wire_message).collect::<Vec<_>>(),
    });
    if !tools.is_empty() {
        body["tools"] = tools
            .iter()
            .map(|t| {
                json!({
                    "type": "function",
                    "function": {"name": t.name, "description": t.description, "parameters": t.parameters_schema},
                })
            })
            .collect::<Vec<_>>()
            .into();
    }
    body
}

/// Parses the first choice of a chat-completions response into a step.
pub fn parse_chat_response(body: &str) -> Result<AssistantStep, ProviderError> {
    let v: Value = serde_json::from_str(body).map_err(|e| ProviderError::Decode(e.to_string()))?;
    let msg = v
        .pointer("/choices/0/message")
        .ok_or_else(|| ProviderError::Decode("response has no choices[0].message".into()))?;
    if let Some(calls) = msg.get("tool_calls").and_then(Value::as_array).filter(|c| !c.is_empty()) {
        let mut out = Vec::with_capacity(calls.len());
        for c in calls {
            let call_id = c.get("id").and_then(Value::as_str).unwrap_or_default().to_string();
            let name = c
                .pointer("/function/name")
                .and_then(Value::as_str)
                .ok_or_else(|| ProviderError::Decode("tool call without function name".into()))?;
            let raw = c.pointer("/function/arguments").cloned().unwrap_or(Value::Null);
            // Arguments arrive as a JSON string; unparsable ones reach the
            // registry as a single field so validation reports them to the model.
            let arguments = match raw {
                Value::String(s) => match serde_json::from_str::<Value>(&s) {
                    Ok(Value::Object(m)) => m,
                    _ => {
                        let mut m = Map::new();
                        m.insert("_unparsed".into(), Value::String(s));
                        m
                    }
                },
                Value::Object(m) => m,
                _ => Map::new(),
            };
            out.push(ToolCall {
                call_id,
                tool_name: name.to_string(),
                arguments,
            });
        }
        return Ok(AssistantStep::ToolCalls { calls: out });
    }
    let text = msg.get("content").and_then(Value::as_str).unwrap_or_default();
    Ok(AssistantStep::text(text))
}

impl ChatProvider for HttpChatProvider {
    fn chat(&self, messages: &[Message], tools: &[ToolDefinition]) -> Result<AssistantStep, ProviderError> {
        let token = self
            .token
            .as_deref()
            .filter(|t| !t.is_empty())
            .ok_or_else(|| ProviderError::Configuration(format!("{PROVIDER_TOKEN_VAR} is not set")))?;
        let body = chat_request_body(&self.model, messages, tools);
        let req = HttpRequest::post_json("/chat/completions", &body).header("authorization", format!("Bearer {token}"));
        let sent = send_with_retry(self.transport.as_ref(), &req, self.retry, self.sleeper.as_ref());
        let resp = match sent.result {
            Ok(r) => r,
            Err(TransportError::Timeout) => return Err(ProviderError::Timeout),
            Err(e) => {
                return Err(ProviderError::Transport {
                    message: e.to_string(),
                    attempts: sent.attempts,
                })
            }
        };
        if resp.is_retryable() {
            return Err(ProviderError::Transport {
                message: format!("HTTP {}", resp.status),
                attempts: sent.attempts,
            });
        }
        if !resp.is_success() {
            let mut message = resp.body;
            message.truncate(512);
            return Err(ProviderError::Status {
                status: resp.status,
                message,
            });
        }
        parse_chat_response(&resp.body)
    }
}

/// Embeddings endpoint client (`POST /embeddings`, OpenAI-compatible).
pub struct HttpEmbedder {
    transport: Arc<dyn Transport>,
    model: String,
    dimension: usize,
    token: Option<String>,
    retry: RetryPolicy,
    sleeper: Arc<dyn Sleeper>,
}

impl HttpEmbedder {
    pub fn new(
        transport: Arc<dyn Transport>,
        model: impl Into<String>,
        dimension: usize,
        token: Option<String>,
        sleeper: Arc<dyn Sleeper>,
    ) -> Self {
        HttpEmbedder {
            transport,
            model: model.into(),
            dimension,
            token,
            retry: RetryPolicy::default(),
            sleeper,
        }
    }
}

impl Embedder for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        let mut req = HttpRequest::post_json("/embeddings", &json!({"model": self.model, "input": texts}));
        if let Some(t) = self.token.as_deref().filter(|t| !t.is_empty()) {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let sent = send_with_retry(self.transport.as_ref(), &req, self.retry, self.sleeper.as_ref());
        let resp = sent.result.map_err(|e| EmbedError::Transport(e.to_string()))?;
        if !resp.is_success() {
            return Err(EmbedError::Transport(format!(
                "HTTP {} after {} attempt(s)",
                resp.status, sent.attempts
            )));
        }
        #[derive(Deserialize)]
        struct Item {
            index: usize,
            embedding: Vec<f64>,
        }
        #[derive(Deserialize)]
        struct Body {
            data: Vec<Item>,
        }
        let mut body: Body = serde_json::from_str(&resp.body).map_err(|e| EmbedError::Decode(e.to_string()))?;
        if body.data.len() != texts.len() {
            return Err(EmbedError::Decode(format!(
                "{} embeddings for {} inputs",
                body.data.len(),
                texts.len()
            )));
        }
        body.data.sort_by_key(|i| i.index);
        body.data
            .into_iter()
            .map(|i| {
                if i.embedding.len() != self.dimension {
                    Err(EmbedError::Dimension {
                        expected: self.dimension,
                        actual: i.embedding.len(),
                    })
                } else {
                    Ok(i.embedding)
                }
            })
            .collect()
    }
}

/// One line of an `embeddings.jsonl` recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedEmbedding {
    pub text: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum RecordingError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    Line { path: String, line: usize, message: String },
    #[error("text {text:?} is recorded twice with different vectors")]
    Conflict { text: String },
}

/// Replays embeddings recorded from a real provider, keyed by exact text.
#[derive(Debug, Clone, Default)]
pub struct RecordedEmbedder {
    dimension: usize,
    vectors: HashMap<String, Embedding>,
}

impl RecordedEmbedder {
    pub fn new(dimension: usize) -> Self {
        RecordedEmbedder {
            dimension,
            vectors: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, rec: RecordedEmbedding) -> Result<(), RecordingError> {
        if rec.vector.len() != self.dimension {
            return Err(RecordingError::Line {
                path: String::new(),
                line: 0,
                message: format!("vector has dimension {}, expected {}", rec.vector.len(), self.dimension),
            });
        }
        match self.vectors.get(&rec.text) {
            Some(v) if v != &rec.vector => Err(RecordingError::Conflict { text: rec.text }),
            Some(_) => Ok(()),
            None => {
                self.vectors.insert(rec.text, rec.vector);
                Ok(())
            }
        }
    }

    /// Adds every line of a JSONL recording.
    pub fn load(&mut self, path: &Path) -> Result<usize, RecordingError> {
        let p = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|e| RecordingError::Read {
            path: p.clone(),
            message: e.to_string(),
        })?;
        let mut n = 0;
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| RecordingError::Read {
                path: p.clone(),
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: RecordedEmbedding = serde_json::from_str(&line).map_err(|e| RecordingError::Line {
                path: p.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            self.insert(rec).map_err(|e| match e {
                RecordingError::Line { message, .. } => RecordingError::Line {
                    path: p.clone(),
                    line: i + 1,
                    message,
                },
                other => other,
            })?;
            n += 1;
        }
        Ok(n)
    }
}

impl Embedder for RecordedEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        texts
            .iter()
            .map(|t| self.vectors.get(t).cloned().ok_or_else(|| EmbedError::NotRecorded(t.clone())))
            .collect()
    }
}

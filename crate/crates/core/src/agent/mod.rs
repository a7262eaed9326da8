//! Tool-calling agent loop.
//!
//! The model is asked for its next step; tool calls in that step are dispatched in
//! order and their results appended to the conversation; the model is asked again.
//! The loop ends on a plain-text answer, on the iteration cap, or when the
//! provider fails. Tool failures are fed back as data so the model can correct
//! its own arguments inside the remaining budget.

mod registry;
mod schema;
mod scripted;
mod turn;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use registry::{dispatch_tool_call, RegistryError, ToolHandler, ToolRegistry};
pub use schema::{ParamType, SchemaError};
pub use scripted::{parse_script, ScriptError, ScriptedProvider};
pub use turn::{run_turn, truncate_payload, ChatProvider, ProviderError, TurnConfig};

/// Default cap on provider round-trips per user turn.
pub const DEFAULT_MAX_ITERATIONS: u32 = 5;
/// Default byte budget for a tool payload handed back to the model.
pub const DEFAULT_PAYLOAD_BUDGET: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDefinition {
    pub name: String,
    pub description: String,
    /// JSON-schema style object: `{"type": "object", "properties": {...}, "required": [...]}`.
    pub parameters_schema: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub call_id: String,
    pub tool_name: String,
    #[serde(default)]
    pub arguments: Map<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Error,
}

/// Machine-readable failure categories carried in error payloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    UnknownTool,
    InvalidArguments,
    HandlerFailure,
    NotFound,
    EmbeddingFailed,
    Transport,
    Decode,
    Configuration,
    Unavailable,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::UnknownTool => "unknown_tool",
            ErrorKind::InvalidArguments => "invalid_arguments",
            ErrorKind::HandlerFailure => "handler_failure",
            ErrorKind::NotFound => "not_found",
            ErrorKind::EmbeddingFailed => "embedding_failed",
            ErrorKind::Transport => "transport",
            ErrorKind::Decode => "decode",
            ErrorKind::Configuration => "configuration",
            ErrorKind::Unavailable => "unavailable",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A handler failure. Becomes the payload of an error [`ToolResult`].
#[derive(Debug, Clone, PartialEq)]
pub struct ToolError {
    pub kind: ErrorKind,
    pub message: String,
    pub details: Option<Value>,
}

impl ToolError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        ToolError {
            kind,
            message: message.into(),
            details: None,
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::InvalidArguments, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::NotFound, message)
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn to_payload(&self) -> Value {
        let mut map = Map::new();
        map.insert("error_kind".into(), Value::String(self.kind.as_str().into()));
        map.insert("message".into(), Value::String(self.message.clone()));
        if let Some(d) = &self.details {
            map.insert("details".into(), d.clone());
        }
        Value::Object(map)
    }
}

impl fmt::Display for ToolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub call_id: String,
    pub outcome: Outcome,
    pub payload: Value,
}

impl ToolResult {
    pub fn ok(call_id: impl Into<String>, payload: Value) -> Self {
        ToolResult {
            call_id: call_id.into(),
            outcome: Outcome::Ok,
            payload,
        }
    }

    pub fn error(call_id: impl Into<String>, error: &ToolError) -> Self {
        ToolResult {
            call_id: call_id.into(),
            outcome: Outcome::Error,
            payload: error.to_payload(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.outcome == Outcome::Ok
    }

    pub fn error_kind(&self) -> Option<&str> {
        match self.outcome {
            Outcome::Ok => None,
            Outcome::Error => self.payload.get("error_kind").and_then(Value::as_str),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Message {
            role,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConversationError {
    #[error("conversation must start with a system message")]
    MissingSystem,
    #[error("tool message {index} answers call {call_id:?} that no preceding assistant step issued")]
    OrphanToolMessage { index: usize, call_id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub session_id: String,
    pub system_prompt: String,
    pub messages: Vec<Message>,
}

impl Conversation {
    pub fn new(session_id: impl Into<String>, system_prompt: impl Into<String>) -> Self {
        let system_prompt = system_prompt.into();
        Conversation {
            session_id: session_id.into(),
            messages: alloc::vec![Message::new(Role::System, system_prompt.clone())],
            system_prompt,
        }
    }

    pub fn push(&mut self, message: Message) {
        self.messages.push(message);
    }

    /// Checks the ordering rules: system first, and every tool message answers a call
    /// from the nearest preceding assistant message.
    pub fn validate(&self) -> Result<(), ConversationError> {
        if self.messages.first().map(|m| m.role) != Some(Role::System) {
            return Err(ConversationError::MissingSystem);
        }
        let mut open: Vec<&str> = Vec::new();
        for (index, m) in self.messages.iter().enumerate() {
            match m.role {
                Role::Assistant => open = m.tool_calls.iter().map(|c| c.call_id.as_str()).collect(),
                Role::Tool => {
                    let id = m.tool_call_id.as_deref().unwrap_or("");
                    if !open.contains(&id) {
                        return Err(ConversationError::OrphanToolMessage {
                            index,
                            call_id: id.into(),
                        });
                    }
                }
                _ => open.clear(),
            }
        }
        Ok(())
    }
}

/// What the model wants to do next. Doubles as the scripted-cassette line format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AssistantStep {
    Text { text: String },
    ToolCalls { calls: Vec<ToolCall> },
}

impl AssistantStep {
    pub fn text(text: impl Into<String>) -> Self {
        AssistantStep::Text { text: text.into() }
    }

    pub fn call(call_id: impl Into<String>, tool_name: impl Into<String>, arguments: Value) -> Self {
        let arguments = match arguments {
            Value::Object(map) => map,
            _ => Map::new(),
        };
        AssistantStep::ToolCalls {
            calls: alloc::vec![ToolCall {
                call_id: call_id.into(),
                tool_name: tool_name.into(),
                arguments,
            }],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Answered,
    IterationLimit,
    ProviderError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolExchange {
    pub call: ToolCall,
    pub result: ToolResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnOutcome {
    pub kind: OutcomeKind,
    /// Empty unless `kind` is `answered`.
    pub final_text: String,
    pub iterations_used: u32,
    pub tool_calls_made: Vec<ToolExchange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

//! Event kinds and the sink interface the agent loop and pipeline write through.
//!
//! Durable storage lives in the std crate; the core only needs somewhere to send
//! events and a way to learn whether they were recorded.

use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Schema version stamped on every stored event.
pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    LlmRequest,
    LlmResponse,
    ToolCall,
    ToolResult,
    Retrieval,
    Override,
    StepBoundary,
    Error,
}

impl TraceKind {
    pub const ALL: [TraceKind; 8] = [
        TraceKind::LlmRequest,
        TraceKind::LlmResponse,
        TraceKind::ToolCall,
        TraceKind::ToolResult,
        TraceKind::Retrieval,
        TraceKind::Override,
        TraceKind::StepBoundary,
        TraceKind::Error,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::LlmRequest => "llm_request",
            TraceKind::LlmResponse => "llm_response",
            TraceKind::ToolCall => "tool_call",
            TraceKind::ToolResult => "tool_result",
            TraceKind::Retrieval => "retrieval",
            TraceKind::Override => "override",
            TraceKind::StepBoundary => "step_boundary",
            TraceKind::Error => "error",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        TraceKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("trace scope {0:?} does not exist")]
    UnknownScope(String),
    #[error("invalid trace scope id {0:?}")]
    InvalidScope(String),
    #[error("trace storage failed: {0}")]
    Storage(String),
}

/// Append-only destination for trace events.
pub trait TraceSink {
    /// Appends one event and returns its sequence number within `scope`.
    /// Implementations must have made the event durable before returning `Ok`.
    fn record(
        &self,
        scope: &str,
        kind: TraceKind,
        payload: Value,
        latency_ms: Option<u64>,
    ) -> Result<u64, TraceError>;

    /// Monotonic milliseconds used for latency measurement, if the sink has a clock.
    fn now_ms(&self) -> Option<u64> {
        None
    }
}

impl<T: TraceSink + ?Sized> TraceSink for &T {
    fn record(&self, scope: &str, kind: TraceKind, payload: Value, latency_ms: Option<u64>) -> Result<u64, TraceError> {
        (**self).record(scope, kind, payload, latency_ms)
    }

    fn now_ms(&self) -> Option<u64> {
        (**self).now_ms()
    }
}

/// Discards every event. Useful where a caller does not care about provenance.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&self, _: &str, _: TraceKind, _: Value, _: Option<u64>) -> Result<u64, TraceError> {
        Ok(0)
    }
}

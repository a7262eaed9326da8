use alloc::string::String;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use super::turn::{ChatProvider, ProviderError};
use super::{AssistantStep, Message, ToolDefinition};

/// Replays a fixed sequence of assistant steps, one per `chat` call, regardless of
/// what it is sent. Calls past the end of the script fail with
/// [`ProviderError::ScriptExhausted`].
#[derive(Debug)]
pub struct ScriptedProvider {
    steps: Vec<AssistantStep>,
    cursor: AtomicUsize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("script line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

impl ScriptedProvider {
    pub fn new(steps: Vec<AssistantStep>) -> Self {
        ScriptedProvider {
            steps,
            cursor: AtomicUsize::new(0),
        }
    }

    /// Builds a provider from JSONL cassette text.
    pub fn from_jsonl(text: &str) -> Result<Self, ScriptError> {
        parse_script(text).map(Self::new)
    }

    /// Number of steps already served.
    pub fn position(&self) -> usize {
        self.cursor.load(Ordering::SeqCst)
    }

    pub fn remaining(&self) -> usize {
        self.steps.len().saturating_sub(self.position())
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl ChatProvider for ScriptedProvider {
    fn chat(&self, _messages: &[Message], _tools: &[ToolDefinition]) -> Result<AssistantStep, ProviderError> {
        let index = self.cursor.fetch_add(1, Ordering::SeqCst);
        self.steps.get(index).cloned().ok_or(ProviderError::ScriptExhausted(index))
    }
}

/// One step object per non-blank line: `{"kind": "text", "text": ...}` or
/// `{"kind": "tool_calls", "calls": [{"call_id", "tool_name", "arguments"}]}`.
/// Lines starting with `#` are comments.
pub fn parse_script(text: &str) -> Result<Vec<AssistantStep>, ScriptError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ScriptError {
                line: i + 1,
                message: alloc::format!("{e}"),
            })
        })
        .collect()
}

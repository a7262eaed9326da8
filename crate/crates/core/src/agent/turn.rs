use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::{json, Map, Value};

use super::registry::{dispatch_tool_call, ToolRegistry};
use super::{
    AssistantStep, Conversation, Message, OutcomeKind, Role, ToolDefinition, ToolExchange, TurnOutcome,
    DEFAULT_MAX_ITERATIONS, DEFAULT_PAYLOAD_BUDGET,
};
use crate::trace::{TraceError, TraceKind, TraceSink};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("provider transport failed after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("provider returned HTTP {status}: {message}")]
    Status { status: u16, message: String },
    #[error("provider response could not be decoded: {0}")]
    Decode(String),
    #[error("provider timed out")]
    Timeout,
    #[error("scripted provider has no step {0}")]
    ScriptExhausted(usize),
    #[error("provider is not configured: {0}")]
    Configuration(String),
}

/// A chat model that, given the conversation so far and the available tools,
/// produces the next assistant step.
pub trait ChatProvider: Send + Sync {
    fn chat(&self, messages: &[Message], tools: &[ToolDefinition]) -> Result<AssistantStep, ProviderError>;
}

impl<P: ChatProvider + ?Sized> ChatProvider for alloc::sync::Arc<P> {
    fn chat(&self, messages: &[Message], tools: &[ToolDefinition]) -> Result<AssistantStep, ProviderError> {
        (**self).chat(messages, tools)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TurnConfig {
    /// Provider round-trips allowed per turn. A step carrying several tool calls
    /// consumes one iteration.
    pub max_iterations: u32,
    /// Byte budget for each tool payload appended to the conversation.
    pub payload_budget: usize,
}

impl Default for TurnConfig {
    fn default() -> Self {
        TurnConfig {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            payload_budget: DEFAULT_PAYLOAD_BUDGET,
        }
    }
}

/// Runs one user turn to completion.
///
/// Every provider request and response, and every tool call and result, is
/// recorded under `conversation.session_id`. Returns `Err` only when the trace
/// itself fails; everything else is reported through [`TurnOutcome::kind`].
pub fn run_turn(
    conversation: &mut Conversation,
    user_prompt: &str,
    registry: &ToolRegistry,
    provider: &dyn ChatProvider,
    config: TurnConfig,
    trace: &dyn TraceSink,
) -> Result<TurnOutcome, TraceError> {
    let scope = conversation.session_id.clone();
    let max = config.max_iterations.max(1);
    let tools = registry.definitions();
    conversation.push(Message::new(Role::User, user_prompt));

    let mut exchanges: Vec<ToolExchange> = Vec::new();
    let mut sent = 0usize;
    let mut iteration = 0u32;
    loop {
        iteration += 1;
        trace.record(
            &scope,
            TraceKind::LlmRequest,
            json!({
                "iteration": iteration,
                "message_count": conversation.messages.len(),
                "new_messages": &conversation.messages[sent..],
                "tools": tools.iter().map(|t| t.name.as_str()).collect::<Vec<_>>(),
            }),
            None,
        )?;
        sent = conversation.messages.len();
        let started = trace.now_ms();
        let step = provider.chat(&conversation.messages, &tools);
        let latency = started.zip(trace.now_ms()).map(|(a, b)| b.saturating_sub(a));

        let step = match step {
            Ok(step) => step,
            Err(err) => {
                let message = err.to_string();
                trace.record(
                    &scope,
                    TraceKind::Error,
                    json!({ "iteration": iteration, "source": "provider", "message": message }),
                    latency,
                )?;
                return Ok(TurnOutcome {
                    kind: OutcomeKind::ProviderError,
                    final_text: String::new(),
                    iterations_used: iteration,
                    tool_calls_made: exchanges,
                    error: Some(message),
                });
            }
        };
        trace.record(
            &scope,
            TraceKind::LlmResponse,
            json!({ "iteration": iteration, "step": step }),
            latency,
        )?;

        match step {
            AssistantStep::Text { text } => {
                conversation.push(Message::new(Role::Assistant, text.clone()));
                return Ok(TurnOutcome {
                    kind: OutcomeKind::Answered,
                    final_text: text,
                    iterations_used: iteration,
                    tool_calls_made: exchanges,
                    error: None,
                });
            }
            AssistantStep::ToolCalls { calls } => {
                let mut assistant = Message::new(Role::Assistant, "");
                assistant.tool_calls = calls.clone();
                conversation.push(assistant);
                for call in calls {
                    let result = dispatch_tool_call(registry, &call, trace, &scope)?;
                    let (shown, _) = truncate_payload(&result.payload, config.payload_budget);
                    let mut body = Map::new();
                    body.insert("outcome".into(), json!(result.outcome));
                    body.insert("payload".into(), shown);
                    let mut msg = Message::new(
                        Role::Tool,
                        serde_json::to_string(&Value::Object(body)).unwrap_or_default(),
                    );
                    msg.tool_call_id = Some(call.call_id.clone());
                    conversation.push(msg);
                    exchanges.push(ToolExchange { call, result });
                }
                if iteration >= max {
                    return Ok(TurnOutcome {
                        kind: OutcomeKind::IterationLimit,
                        final_text: String::new(),
                        iterations_used: iteration,
                        tool_calls_made: exchanges,
                        error: None,
                    });
                }
            }
        }
    }
}

fn encoded_len(v: &Value) -> usize {
    serde_json::to_string(v).map(|s| s.len()).unwrap_or(usize::MAX)
}

/// Shrinks `payload` to at most `budget` serialized bytes.
///
/// The longest array in the payload (top level or one level down) is trimmed
/// from the end. Anything that still does not fit becomes a string preview.
/// Trimmed output carries `"truncated": true`; the flag reports whether anything
/// was removed.
pub fn truncate_payload(payload: &Value, budget: usize) -> (Value, bool) {
    if encoded_len(payload) <= budget {
        return (payload.clone(), false);
    }
    let trimmed = match payload {
        Value::Array(items) => {
            let wrap = |n: usize| json!({ "items": &items[..n], "truncated": true, "total_items": items.len() });
            largest_fitting(items.len(), budget, wrap)
        }
        Value::Object(map) => {
            let longest = map
                .iter()
                .filter_map(|(k, v)| v.as_array().map(|a| (k.clone(), a.len())))
                .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)));
            longest.and_then(|(key, len)| {
                let build = |n: usize| {
                    let mut m = map.clone();
                    if let Some(Value::Array(a)) = m.get_mut(&key) {
                        a.truncate(n);
                    }
                    m.insert("truncated".into(), Value::Bool(true));
                    m.insert(format!("{key}_total"), json!(len));
                    Value::Object(m)
                };
                largest_fitting(len, budget, build)
            })
        }
        _ => None,
    };
    if let Some(v) = trimmed {
        return (v, true);
    }
    let text = serde_json::to_string(payload).unwrap_or_default();
    // Leave room for the wrapper object and escaping.
    let mut cut = budget.saturating_sub(96) / 2;
    while cut > 0 && !text.is_char_boundary(cut) {
        cut -= 1;
    }
    (
        json!({ "truncated": true, "original_bytes": text.len(), "preview": &text[..cut.min(text.len())] }),
        true,
    )
}

/// Binary search for the largest prefix length whose rendering fits.
fn largest_fitting(len: usize, budget: usize, render: impl Fn(usize) -> Value) -> Option<Value> {
    if encoded_len(&render(0)) > budget {
        return None;
    }
    let (mut lo, mut hi) = (0usize, len);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if encoded_len(&render(mid)) <= budget {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Some(render(lo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{ParamType, ScriptedProvider, ToolError};
    use crate::trace::testing::VecSink;
    use alloc::vec;

    fn registry() -> ToolRegistry {
        let mut r = ToolRegistry::new();
        r.register(
            ToolDefinition::new("get_bill_status", "status").param("bill_id", ParamType::String, "id", true),
            |args: &Map<String, Value>| {
                let id = args["bill_id"].as_str().unwrap_or_default();
                match crate::model::parse_bill_id(id) {
                    Ok(_) => Ok(json!({"bill_id": id, "enacted": false, "status": "Not Enacted"})),
                    Err(e) => Err(ToolError::invalid(e.to_string())),
                }
            },
        )
        .unwrap();
        r
    }

    fn conv() -> Conversation {
        Conversation::new("sess-1", "You are a research assistant.")
    }

    #[test]
    fn immediate_answer() {
        let provider = ScriptedProvider::new(vec![AssistantStep::text("hi")]);
        let sink = VecSink::default();
        let mut c = conv();
        let out = run_turn(&mut c, "hello", &registry(), &provider, TurnConfig::default(), &sink).unwrap();
        assert_eq!(out.kind, OutcomeKind::Answered);
        assert_eq!(out.final_text, "hi");
        assert_eq!(out.iterations_used, 1);
        assert!(out.tool_calls_made.is_empty());
        c.validate().unwrap();
    }

    #[test]
    fn endless_tool_calls_hit_the_cap() {
        let steps = (0..20)
            .map(|i| AssistantStep::call(format!("c{i}"), "get_bill_status", json!({"bill_id": "113-s-1"})))
            .collect();
        let provider = ScriptedProvider::new(steps);
        let sink = VecSink::default();
        let mut c = conv();
        let out = run_turn(&mut c, "loop", &registry(), &provider, TurnConfig::default(), &sink).unwrap();
        assert_eq!(out.kind, OutcomeKind::IterationLimit);
        assert_eq!(out.iterations_used, 5);
        assert_eq!(out.tool_calls_made.len(), 5);
        assert_eq!(sink.count(TraceKind::ToolCall), 5);
        assert_eq!(sink.count(TraceKind::LlmRequest), 5);
        assert!(out.final_text.is_empty());
    }

    #[test]
    fn self_correction_after_error() {
        let provider = ScriptedProvider::new(vec![
            AssistantStep::call("c1", "get_bill_status", json!({"bill_id": "113-s"})),
            AssistantStep::call("c2", "get_bill_status", json!({"bill_id": "113-s-1"})),
            AssistantStep::text("S.1 was not enacted."),
        ]);
        let sink = VecSink::default();
        let mut c = conv();
        let out = run_turn(&mut c, "status of S.1?", &registry(), &provider, TurnConfig::default(), &sink).unwrap();
        assert_eq!(out.kind, OutcomeKind::Answered);
        assert_eq!(out.iterations_used, 3);
        assert_eq!(out.tool_calls_made.len(), 2);
        assert_eq!(out.tool_calls_made[0].result.error_kind(), Some("invalid_arguments"));
        assert!(out.tool_calls_made[1].result.is_ok());
        c.validate().unwrap();
    }

    #[test]
    fn exhausted_script_is_provider_error() {
        let provider = ScriptedProvider::new(vec![]);
        let sink = VecSink::default();
        let out = run_turn(&mut conv(), "x", &registry(), &provider, TurnConfig::default(), &sink).unwrap();
        assert_eq!(out.kind, OutcomeKind::ProviderError);
        assert_eq!(out.iterations_used, 1);
        assert_eq!(sink.count(TraceKind::Error), 1);
    }

    #[test]
    fn several_calls_in_one_step_use_one_iteration() {
        let provider = ScriptedProvider::new(vec![
            AssistantStep::ToolCalls {
                calls: vec![
                    serde_json::from_value(json!({"call_id": "a", "tool_name": "get_bill_status", "arguments": {"bill_id": "113-s-1"}})).unwrap(),
                    serde_json::from_value(json!({"call_id": "b", "tool_name": "get_bill_status", "arguments": {"bill_id": "113-hr-2"}})).unwrap(),
                ],
            },
            AssistantStep::text("done"),
        ]);
        let sink = VecSink::default();
        let mut c = conv();
        let out = run_turn(&mut c, "x", &registry(), &provider, TurnConfig::default(), &sink).unwrap();
        assert_eq!(out.iterations_used, 2);
        let ids: Vec<_> = out.tool_calls_made.iter().map(|e| e.call.call_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        c.validate().unwrap();
    }

    #[test]
    fn trace_failure_surfaces() {
        let provider = ScriptedProvider::new(vec![AssistantStep::text("hi")]);
        let sink = VecSink {
            fail_after: Some(1),
            ..Default::default()
        };
        assert!(run_turn(&mut conv(), "x", &registry(), &provider, TurnConfig::default(), &sink).is_err());
    }

    #[test]
    fn large_payloads_are_truncated_for_the_model() {
        let hits: Vec<Value> = (0..500).map(|i| json!({"doc_id": format!("d{i}"), "text": "x".repeat(100)})).collect();
        let payload = json!({"hits": hits, "query": "q"});
        let (small, cut) = truncate_payload(&payload, 4096);
        assert!(cut);
        assert!(encoded_len(&small) <= 4096);
        assert_eq!(small["truncated"], json!(true));
        assert_eq!(small["hits_total"], json!(500));
        assert!(!small["hits"].as_array().unwrap().is_empty());

        let (same, cut) = truncate_payload(&json!({"a": 1}), 4096);
        assert!(!cut);
        assert_eq!(same, json!({"a": 1}));

        let long = Value::String("y".repeat(10_000));
        let (preview, cut) = truncate_payload(&long, 1024);
        assert!(cut);
        assert!(encoded_len(&preview) <= 1024);
    }
}

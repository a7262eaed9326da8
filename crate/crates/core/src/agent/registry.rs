use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde_json::{json, Map, Value};

use super::schema::SchemaError;
use super::{ErrorKind, ToolCall, ToolDefinition, ToolError, ToolResult};
use crate::trace::{TraceError, TraceKind, TraceSink};

/// Something a tool name dispatches to.
pub trait ToolHandler: Send + Sync {
    fn call(&self, arguments: &Map<String, Value>) -> Result<Value, ToolError>;
}

impl<F> ToolHandler for F
where
    F: Fn(&Map<String, Value>) -> Result<Value, ToolError> + Send + Sync,
{
    fn call(&self, arguments: &Map<String, Value>) -> Result<Value, ToolError> {
        self(arguments)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("tool {0:?} is already registered")]
    Duplicate(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

struct Entry {
    definition: ToolDefinition,
    handler: Box<dyn ToolHandler>,
}

/// Named tools in registration order. Built once at startup, then shared read-only.
#[derive(Default)]
pub struct ToolRegistry {
    entries: Vec<Entry>,
    by_name: BTreeMap<String, usize>,
}

impl core::fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_list().entries(self.by_name.keys()).finish()
    }
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<H: ToolHandler + 'static>(
        &mut self,
        definition: ToolDefinition,
        handler: H,
    ) -> Result<&mut Self, RegistryError> {
        self.register_boxed(definition, Box::new(handler))
    }

    pub fn register_boxed(
        &mut self,
        definition: ToolDefinition,
        handler: Box<dyn ToolHandler>,
    ) -> Result<&mut Self, RegistryError> {
        definition.validate()?;
        if self.by_name.contains_key(&definition.name) {
            return Err(RegistryError::Duplicate(definition.name));
        }
        self.by_name.insert(definition.name.clone(), self.entries.len());
        self.entries.push(Entry { definition, handler });
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.definition.name.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    pub fn definitions(&self) -> Vec<ToolDefinition> {
        self.entries.iter().map(|e| e.definition.clone()).collect()
    }

    pub fn definition(&self, name: &str) -> Option<&ToolDefinition> {
        self.by_name.get(name).map(|i| &self.entries[*i].definition)
    }

    fn invoke(&self, call: &ToolCall) -> ToolResult {
        let Some(entry) = self.by_name.get(&call.tool_name).map(|i| &self.entries[*i]) else {
            let err = ToolError::new(
                ErrorKind::UnknownTool,
                alloc::format!("no tool named {:?}", call.tool_name),
            )
            .with_details(json!({ "available": self.names().collect::<Vec<_>>() }));
            return ToolResult::error(call.call_id.clone(), &err);
        };
        if let Err(message) = entry.definition.check_arguments(&call.arguments) {
            return ToolResult::error(call.call_id.clone(), &ToolError::invalid(message));
        }
        match entry.handler.call(&call.arguments) {
            Ok(payload) => ToolResult::ok(call.call_id.clone(), payload),
            Err(err) => ToolResult::error(call.call_id.clone(), &err),
        }
    }
}

/// Runs one call and records exactly one `tool_call`/`tool_result` pair in `scope`.
///
/// Tool-level failures come back as error results. The only `Err` is a trace
/// failure: if the call event cannot be recorded the handler is not run.
pub fn dispatch_tool_call(
    registry: &ToolRegistry,
    call: &ToolCall,
    trace: &dyn TraceSink,
    scope: &str,
) -> Result<ToolResult, TraceError> {
    trace.record(
        scope,
        TraceKind::ToolCall,
        json!({
            "call_id": call.call_id,
            "tool_name": call.tool_name,
            "arguments": call.arguments,
        }),
        None,
    )?;
    let started = trace.now_ms();
    let result = registry.invoke(call);
    let latency = started.zip(trace.now_ms()).map(|(a, b)| b.saturating_sub(a));
    trace.record(
        scope,
        TraceKind::ToolResult,
        json!({
            "call_id": result.call_id,
            "tool_name": call.tool_name,
            "outcome": result.outcome,
            "payload": result.payload,
        }),
        latency,
    )?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{Outcome, ParamType};
    use crate::trace::testing::VecSink;

    fn status_def() -> ToolDefinition {
        ToolDefinition::new("get_bill_status", "Enactment status of a bill")
            .param("bill_id", ParamType::String, "canonical bill id", true)
    }

    fn status_handler(args: &Map<String, Value>) -> Result<Value, ToolError> {
        match args["bill_id"].as_str() {
            Some("113-s-1") => Ok(json!({"enacted": false, "status": "Not Enacted"})),
            Some("boom") => Err(ToolError::new(ErrorKind::HandlerFailure, "exploded")),
            Some(other) => Err(ToolError::not_found(alloc::format!("{other} not found"))),
            None => unreachable!(),
        }
    }

    fn call(name: &str, args: Value) -> ToolCall {
        ToolCall {
            call_id: "c1".into(),
            tool_name: name.into(),
            arguments: args.as_object().cloned().unwrap_or_default(),
        }
    }

    #[test]
    fn register_and_list() {
        let mut r = ToolRegistry::new();
        r.register(status_def(), status_handler).unwrap();
        assert!(r.names().any(|n| n == "get_bill_status"));
        assert_eq!(
            r.register(status_def(), status_handler).unwrap_err(),
            RegistryError::Duplicate("get_bill_status".into())
        );
        assert_eq!(r.len(), 1);
    }

    #[test]
    fn rejects_bad_definitions() {
        let mut r = ToolRegistry::new();
        let err = r.register(ToolDefinition::new("Bad-Name", ""), status_handler).unwrap_err();
        assert!(matches!(err, RegistryError::Schema(SchemaError::InvalidName(_))));
    }

    #[test]
    fn dispatch_outcomes() {
        let mut r = ToolRegistry::new();
        r.register(status_def(), status_handler).unwrap();
        let sink = VecSink::default();

        let res = dispatch_tool_call(&r, &call("no_such_tool", json!({})), &sink, "s").unwrap();
        assert_eq!(res.error_kind(), Some("unknown_tool"));

        let res = dispatch_tool_call(&r, &call("get_bill_status", json!({"bill_id": "113-s-1"})), &sink, "s").unwrap();
        assert_eq!(res.outcome, Outcome::Ok);
        assert_eq!(res.payload["enacted"], json!(false));

        let res = dispatch_tool_call(&r, &call("get_bill_status", json!({"bill_id": 42})), &sink, "s").unwrap();
        assert_eq!(res.error_kind(), Some("invalid_arguments"));

        let res = dispatch_tool_call(&r, &call("get_bill_status", json!({"bill_id": "boom"})), &sink, "s").unwrap();
        assert_eq!(res.error_kind(), Some("handler_failure"));

        assert_eq!(sink.count(TraceKind::ToolCall), 4);
        assert_eq!(sink.count(TraceKind::ToolResult), 4);
    }

    #[test]
    fn untraceable_call_is_not_run() {
        use core::sync::atomic::{AtomicUsize, Ordering};
        static RUNS: AtomicUsize = AtomicUsize::new(0);
        let mut r = ToolRegistry::new();
        r.register(status_def(), |_: &Map<String, Value>| {
            RUNS.fetch_add(1, Ordering::SeqCst);
            Ok(Value::Null)
        })
        .unwrap();
        let sink = VecSink {
            fail_after: Some(0),
            ..Default::default()
        };
        let err = dispatch_tool_call(&r, &call("get_bill_status", json!({"bill_id": "x"})), &sink, "s");
        assert!(err.is_err());
        assert_eq!(RUNS.load(Ordering::SeqCst), 0);
    }
}

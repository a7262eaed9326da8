//! Minimal parameter schemas: flat objects of typed, optionally required fields.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::{json, Map, Value};

use super::ToolDefinition;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamType {
    String,
    Integer,
    Number,
    Boolean,
    Array,
    Object,
}

impl ParamType {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamType::String => "string",
            ParamType::Integer => "integer",
            ParamType::Number => "number",
            ParamType::Boolean => "boolean",
            ParamType::Array => "array",
            ParamType::Object => "object",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "string" => ParamType::String,
            "integer" => ParamType::Integer,
            "number" => ParamType::Number,
            "boolean" => ParamType::Boolean,
            "array" => ParamType::Array,
            "object" => ParamType::Object,
            _ => return None,
        })
    }

    fn accepts(self, value: &Value) -> bool {
        match self {
            ParamType::String => value.is_string(),
            ParamType::Integer => value.is_i64() || value.is_u64(),
            ParamType::Number => value.is_number(),
            ParamType::Boolean => value.is_boolean(),
            ParamType::Array => value.is_array(),
            ParamType::Object => value.is_object(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("tool name {0:?} must match [a-z][a-z0-9_]*")]
    InvalidName(String),
    #[error("tool {tool}: {reason}")]
    InvalidSchema { tool: String, reason: String },
}

pub(crate) fn valid_tool_name(name: &str) -> bool {
    let mut bytes = name.bytes();
    matches!(bytes.next(), Some(b'a'..=b'z'))
        && bytes.all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

impl ToolDefinition {
    /// A definition with no parameters yet; add them with [`ToolDefinition::param`].
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        ToolDefinition {
            name: name.into(),
            description: description.into(),
            parameters_schema: json!({
                "type": "object",
                "properties": {},
                "required": [],
                "additionalProperties": false,
            }),
        }
    }

    pub fn param(mut self, name: &str, ty: ParamType, description: &str, required: bool) -> Self {
        let schema = self.parameters_schema.as_object_mut().expect("schema object");
        if let Some(Value::Object(props)) = schema.get_mut("properties") {
            props.insert(
                name.into(),
                json!({ "type": ty.as_str(), "description": description }),
            );
        }
        if required {
            if let Some(Value::Array(req)) = schema.get_mut("required") {
                req.push(Value::String(name.into()));
            }
        }
        self
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        if !valid_tool_name(&self.name) {
            return Err(SchemaError::InvalidName(self.name.clone()));
        }
        let bad = |reason: &str| SchemaError::InvalidSchema {
            tool: self.name.clone(),
            reason: reason.into(),
        };
        let schema = self.parameters_schema.as_object().ok_or_else(|| bad("schema must be an object"))?;
        if schema.get("type").and_then(Value::as_str) != Some("object") {
            return Err(bad("schema type must be \"object\""));
        }
        let props = match schema.get("properties") {
            None => return Err(bad("schema has no properties map")),
            Some(Value::Object(p)) => p,
            Some(_) => return Err(bad("properties must be an object")),
        };
        for (name, spec) in props {
            let ty = spec.get("type").and_then(Value::as_str).unwrap_or("");
            if ParamType::parse(ty).is_none() {
                return Err(bad(&format!("parameter {name:?} has unsupported type {ty:?}")));
            }
        }
        for req in required(schema) {
            if !props.contains_key(req) {
                return Err(bad(&format!("required parameter {req:?} is not described")));
            }
        }
        Ok(())
    }

    /// Required-ness and type checks. The error names the offending field.
    pub fn check_arguments(&self, args: &Map<String, Value>) -> Result<(), String> {
        let Some(schema) = self.parameters_schema.as_object() else {
            return Ok(());
        };
        let empty = Map::new();
        let props = schema.get("properties").and_then(Value::as_object).unwrap_or(&empty);
        for req in required(schema) {
            match args.get(req) {
                None | Some(Value::Null) => return Err(format!("missing required argument {req:?}")),
                Some(_) => {}
            }
        }
        let closed = schema.get("additionalProperties") == Some(&Value::Bool(false));
        for (name, value) in args {
            match props.get(name) {
                Some(spec) => {
                    let ty = spec.get("type").and_then(Value::as_str).and_then(ParamType::parse);
                    if let Some(ty) = ty {
                        if !value.is_null() && !ty.accepts(value) {
                            return Err(format!(
                                "argument {name:?} must be of type {}, got {}",
                                ty.as_str(),
                                json_type(value)
                            ));
                        }
                    }
                }
                None if closed => return Err(format!("unexpected argument {name:?}")),
                None => {}
            }
        }
        Ok(())
    }

    pub fn required_params(&self) -> Vec<String> {
        self.parameters_schema
            .as_object()
            .map(|s| required(s).map(ToString::to_string).collect())
            .unwrap_or_default()
    }
}

fn required(schema: &Map<String, Value>) -> impl Iterator<Item = &str> {
    schema
        .get("required")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
        .filter_map(Value::as_str)
}

fn json_type(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_f64() => "number",
        Value::Number(_) => "integer",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

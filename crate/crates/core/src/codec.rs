//! Wire grammar for assistant output and tool observations.
//!
//! An assistant output is an optional leading think segment followed by a
//! body. The body is interpreted with a fixed precedence:
//!
//! 1. the exact sentinel `searchTools()` (surrounding whitespace ignored) is a
//!    retrieval action;
//! 2. a JSON array of `{"name", "arguments"}` objects, either wrapped in the
//!    configured tool-call markers or bare, is a tool invocation;
//! 3. anything else is spoken text.
//!
//! Only a marked tool-call block can fail to parse; everything else degrades
//! to speech.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{AgentAction, ArgValue, ObservationEvent, ReasoningTrace, ToolCall};

pub const RETRIEVE_SENTINEL: &str = "searchTools()";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("malformed tool call at byte {offset}: {reason}")]
    MalformedToolCall { offset: usize, reason: String },
    #[error("observation block may only contain env feedback events")]
    TypeMismatch,
    #[error("malformed observation block: {0}")]
    MalformedObservation(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub think_open: String,
    pub think_close: String,
    pub call_open: String,
    pub call_close: String,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            think_open: "<think>".into(),
            think_close: "</think>".into(),
            call_open: "<tool_call>".into(),
            call_close: "</tool_call>".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedOutput {
    pub trace: ReasoningTrace,
    pub action: AgentAction,
}

/// Splits a leading think segment from the rest of the text. Returns the
/// segment's inner text (if markers were present) and the body.
pub fn split_think<'a>(text: &'a str, config: &CodecConfig) -> (Option<&'a str>, &'a str) {
    let trimmed = text.trim_start();
    let Some(after_open) = trimmed.strip_prefix(config.think_open.as_str()) else {
        return (None, text);
    };
    match after_open.find(config.think_close.as_str()) {
        Some(end) => (
            Some(&after_open[..end]),
            &after_open[end + config.think_close.len()..],
        ),
        // unterminated segment: everything is reasoning
        None => (Some(after_open), ""),
    }
}

pub fn parse_assistant_output(text: &str) -> Result<ParsedOutput, CodecError> {
    parse_assistant_output_with(text, &CodecConfig::default())
}

pub fn parse_assistant_output_with(
    text: &str,
    config: &CodecConfig,
) -> Result<ParsedOutput, CodecError> {
    let (think, body) = split_think(text, config);
    let trace = think
        .map(|t| ReasoningTrace::new(t.trim()))
        .unwrap_or_default();
    let body_offset = text.len() - body.len();
    Ok(ParsedOutput {
        trace,
        action: parse_body(body, body_offset, config)?,
    })
}

fn parse_body(body: &str, base: usize, config: &CodecConfig) -> Result<AgentAction, CodecError> {
    let trimmed = body.trim();
    if trimmed == RETRIEVE_SENTINEL {
        return Ok(AgentAction::Retrieve);
    }
    if !config.call_open.is_empty() && body.contains(config.call_open.as_str()) {
        let calls = parse_marked_calls(body, base, config)?;
        return Ok(AgentAction::InvokeTools { calls });
    }
    if trimmed.starts_with('[') {
        let lead = body.len() - body.trim_start().len();
        if let Ok(calls) = parse_call_array(trimmed, base + lead) {
            if !calls.is_empty() {
                return Ok(AgentAction::InvokeTools { calls });
            }
        }
    }
    Ok(AgentAction::Speak {
        text: trimmed.to_string(),
    })
}

fn parse_marked_calls(
    body: &str,
    base: usize,
    config: &CodecConfig,
) -> Result<Vec<ToolCall>, CodecError> {
    let mut calls = Vec::new();
    let mut rest = body;
    let mut consumed = 0;
    while let Some(start) = rest.find(config.call_open.as_str()) {
        let inner_start = start + config.call_open.len();
        let Some(len) = rest[inner_start..].find(config.call_close.as_str()) else {
            return Err(CodecError::MalformedToolCall {
                offset: base + consumed + start,
                reason: "unterminated tool-call block".into(),
            });
        };
        let payload = &rest[inner_start..inner_start + len];
        let lead = payload.len() - payload.trim_start().len();
        let payload_base = base + consumed + inner_start + lead;
        let parsed = parse_call_array(payload.trim(), payload_base)
            .map_err(|(offset, reason)| CodecError::MalformedToolCall { offset, reason })?;
        if parsed.is_empty() {
            return Err(CodecError::MalformedToolCall {
                offset: payload_base,
                reason: "empty tool-call array".into(),
            });
        }
        calls.extend(parsed);
        let advance = inner_start + len + config.call_close.len();
        consumed += advance;
        rest = &rest[advance..];
    }
    Ok(calls)
}

fn skip_ws(s: &str, mut pos: usize) -> usize {
    let bytes = s.as_bytes();
    while pos < bytes.len() && (bytes[pos] as char).is_ascii_whitespace() {
        pos += 1;
    }
    pos
}

fn line_col_to_offset(s: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in s.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(s.len());
        }
        offset += l.len();
    }
    s.len()
}

/// Parses a JSON array of tool-call objects, reporting the byte offset (plus
/// `base`) of the first violation.
fn parse_call_array(payload: &str, base: usize) -> Result<Vec<ToolCall>, (usize, String)> {
    let err = |pos: usize, reason: &str| Err((base + pos, reason.to_string()));
    let mut pos = skip_ws(payload, 0);
    if !payload[pos..].starts_with('[') {
        return err(pos, "expected `[`");
    }
    pos = skip_ws(payload, pos + 1);
    let mut calls = Vec::new();
    if payload[pos..].starts_with(']') {
        pos = skip_ws(payload, pos + 1);
        return if pos == payload.len() {
            Ok(calls)
        } else {
            err(pos, "trailing data after array")
        };
    }
    loop {
        let start = pos;
        let mut stream = serde_json::Deserializer::from_str(&payload[start..]).into_iter::<Value>();
        let value = match stream.next() {
            Some(Ok(v)) => v,
            Some(Err(e)) => {
                let at = start + line_col_to_offset(&payload[start..], e.line(), e.column());
                return err(at, &e.to_string());
            }
            None => return err(start, "expected a tool-call object"),
        };
        pos = start + stream.byte_offset();
        calls.push(call_from_value(value).map_err(|reason| (base + start, reason))?);
        pos = skip_ws(payload, pos);
        match payload[pos..].chars().next() {
            Some(',') => pos = skip_ws(payload, pos + 1),
            Some(']') => {
                pos = skip_ws(payload, pos + 1);
                return if pos == payload.len() {
                    Ok(calls)
                } else {
                    err(pos, "trailing data after array")
                };
            }
            _ => return err(pos, "expected `,` or `]`"),
        }
    }
}

fn call_from_value(value: Value) -> Result<ToolCall, String> {
    let Value::Object(mut obj) = value else {
        return Err("tool call must be an object".into());
    };
    let name = match obj.remove("name") {
        Some(Value::String(s)) if !s.is_empty() => s,
        _ => return Err("tool call needs a non-empty string `name`".into()),
    };
    let arguments = match obj.remove("arguments") {
        Some(v @ Value::Object(_)) => match ArgValue::from_json(v) {
            Some(ArgValue::Map(m)) => m,
            _ => return Err("`arguments` may not contain null".into()),
        },
        _ => return Err("tool call needs an object `arguments`".into()),
    };
    Ok(ToolCall { name, arguments })
}

/// Canonical text of an action: speech verbatim, the retrieval sentinel, or a
/// compact JSON array of calls with keys ordered `name`, `arguments`.
pub fn serialize_action(action: &AgentAction) -> String {
    match action {
        AgentAction::Speak { text } => text.clone(),
        AgentAction::Retrieve => RETRIEVE_SENTINEL.to_string(),
        AgentAction::InvokeTools { calls } => serialize_calls(calls),
    }
}

pub fn serialize_calls(calls: &[ToolCall]) -> String {
    let array: Vec<Value> = calls
        .iter()
        .map(|c| {
            let mut obj = serde_json::Map::new();
            obj.insert("name".into(), Value::String(c.name.clone()));
            obj.insert(
                "arguments".into(),
                Value::Object(
                    c.arguments
                        .iter()
                        .map(|(k, v)| (k.clone(), v.to_json()))
                        .collect(),
                ),
            );
            Value::Object(obj)
        })
        .collect();
    serde_json::to_string(&array).expect("json values serialize")
}

/// Full assistant output: think segment followed by the canonical body.
pub fn serialize_output(
    trace: &ReasoningTrace,
    action: &AgentAction,
    config: &CodecConfig,
) -> String {
    format!(
        "{}{}{}{}",
        config.think_open,
        trace.text,
        config.think_close,
        serialize_action(action)
    )
}

/// JSON array of `{"name", "results"}` objects in call order.
pub fn serialize_observation(events: &[ObservationEvent]) -> Result<String, CodecError> {
    let mut array = Vec::with_capacity(events.len());
    for event in events {
        let ObservationEvent::EnvFeedback { tool_name, result } = event else {
            return Err(CodecError::TypeMismatch);
        };
        let mut obj = serde_json::Map::new();
        obj.insert("name".into(), Value::String(tool_name.clone()));
        obj.insert("results".into(), result.to_json());
        array.push(Value::Object(obj));
    }
    Ok(serde_json::to_string(&array).expect("json values serialize"))
}

pub fn parse_observation(text: &str) -> Result<Vec<ObservationEvent>, CodecError> {
    let bad = |m: &str| CodecError::MalformedObservation(m.to_string());
    let value: Value = serde_json::from_str(text).map_err(|e| bad(&e.to_string()))?;
    let Value::Array(items) = value else {
        return Err(bad("expected an array"));
    };
    items
        .into_iter()
        .map(|item| {
            let Value::Object(mut obj) = item else {
                return Err(bad("expected an object"));
            };
            let name = match obj.remove("name") {
                Some(Value::String(s)) => s,
                _ => return Err(bad("missing `name`")),
            };
            let results = obj
                .remove("results")
                .ok_or_else(|| bad("missing `results`"))?;
            let result = ArgValue::from_json(results).ok_or_else(|| bad("null result"))?;
            Ok(ObservationEvent::feedback(name, result))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADSET_FIRST: &str = r#"<think>plan</think>[{"name":"headset.feature_availability","arguments":{"feature":"noise_cancellation","regions":["Europe","Asia"]}}]"#;

    #[test]
    fn parses_tool_invocation() {
        let out = parse_assistant_output(HEADSET_FIRST).unwrap();
        assert_eq!(out.trace.text, "plan");
        let AgentAction::InvokeTools { calls } = out.action else {
            panic!()
        };
        assert_eq!(calls.len(), 1);
        assert_eq!(calls[0].name, "headset.feature_availability");
        assert_eq!(
            calls[0].arguments["feature"],
            ArgValue::text("noise_cancellation")
        );
        assert_eq!(
            calls[0].arguments["regions"],
            ArgValue::List(vec![ArgValue::text("Europe"), ArgValue::text("Asia")])
        );
    }

    #[test]
    fn empty_think_and_speech() {
        let out = parse_assistant_output("<think></think>Hello there").unwrap();
        assert!(out.trace.is_empty());
        assert_eq!(out.action, AgentAction::speak("Hello there"));
    }

    #[test]
    fn no_markers_gives_empty_trace() {
        let out = parse_assistant_output("just talking").unwrap();
        assert_eq!(out.trace, ReasoningTrace::empty());
        assert_eq!(out.action, AgentAction::speak("just talking"));
    }

    #[test]
    fn retrieval_sentinel_is_exact() {
        assert_eq!(
            parse_assistant_output("<think>x</think>  searchTools()\n")
                .unwrap()
                .action,
            AgentAction::Retrieve
        );
        assert!(matches!(
            parse_assistant_output("searchtools()").unwrap().action,
            AgentAction::Speak { .. }
        ));
        assert!(matches!(
            parse_assistant_output("I will call searchTools() now")
                .unwrap()
                .action,
            AgentAction::Speak { .. }
        ));
    }

    #[test]
    fn sentinel_wins_over_markers() {
        // precedence: sentinel is checked before marker blocks
        let out = parse_assistant_output("searchTools()").unwrap();
        assert!(out.action.is_retrieve());
    }

    #[test]
    fn marked_calls_and_errors() {
        let ok = parse_assistant_output(r#"<tool_call>[{"name":"f","arguments":{}}]</tool_call>"#)
            .unwrap();
        assert!(matches!(ok.action, AgentAction::InvokeTools { ref calls } if calls.len() == 1));

        let text = r#"<tool_call>[{"name":"f","arguments":{}}, 3]</tool_call>"#;
        let err = parse_assistant_output(text).unwrap_err();
        let CodecError::MalformedToolCall { offset, .. } = err else {
            panic!()
        };
        assert_eq!(&text[offset..offset + 1], "3");

        let text = r#"<tool_call>[{"name":"f","arguments":{]</tool_call>"#;
        let CodecError::MalformedToolCall { offset, .. } =
            parse_assistant_output(text).unwrap_err()
        else {
            panic!()
        };
        assert!(offset >= "<tool_call>[".len() && offset < text.len());

        let text = r#"ok <tool_call>[{"arguments":{}}]</tool_call>"#;
        let CodecError::MalformedToolCall { offset, .. } =
            parse_assistant_output(text).unwrap_err()
        else {
            panic!()
        };
        assert_eq!(&text[offset..offset + 1], "{");
    }

    #[test]
    fn invalid_bare_array_is_speech() {
        let out = parse_assistant_output("[1, 2, 3]").unwrap();
        assert_eq!(out.action, AgentAction::speak("[1, 2, 3]"));
        let out = parse_assistant_output("[]").unwrap();
        assert_eq!(out.action, AgentAction::speak("[]"));
    }

    #[test]
    fn serialize_forms() {
        assert_eq!(serialize_action(&AgentAction::Retrieve), "searchTools()");
        assert_eq!(serialize_action(&AgentAction::speak("hi")), "hi");
        let call = ToolCall::new("headset.user_reviews_analysis")
            .arg("headset_model", ArgValue::text("HyperX Cloud II"))
            .arg(
                "review_sources",
                ArgValue::List(vec![ArgValue::text("Amazon"), ArgValue::text("eBay")]),
            );
        let s = serialize_action(&AgentAction::InvokeTools { calls: vec![call] });
        assert!(s.contains("headset.user_reviews_analysis"));
        assert!(s.contains(r#"["Amazon","eBay"]"#));
        assert!(s.starts_with(r#"[{"name":"#));
    }

    #[test]
    fn observation_serialization() {
        assert_eq!(serialize_observation(&[]).unwrap(), "[]");
        let availability = ArgValue::map([(
            "availability",
            ArgValue::List(vec![
                ArgValue::map([
                    ("region", ArgValue::text("Europe")),
                    ("is_available", ArgValue::Boolean(true)),
                ]),
                ArgValue::map([
                    ("region", ArgValue::text("Asia")),
                    ("is_available", ArgValue::Boolean(true)),
                ]),
            ]),
        )]);
        let events = vec![ObservationEvent::feedback(
            "headset.feature_availability",
            availability,
        )];
        let s = serialize_observation(&events).unwrap();
        assert_eq!(s.matches(r#""is_available":true"#).count(), 2);
        assert_eq!(parse_observation(&s).unwrap(), events);
        assert_eq!(
            serialize_observation(&[ObservationEvent::user("x")]),
            Err(CodecError::TypeMismatch)
        );
    }

    #[test]
    fn custom_markers() {
        let cfg = CodecConfig {
            think_open: "[[reason]]".into(),
            think_close: "[[/reason]]".into(),
            ..CodecConfig::default()
        };
        let out =
            parse_assistant_output_with("[[reason]]a b[[/reason]]searchTools()", &cfg).unwrap();
        assert_eq!(out.trace.word_count, 2);
        assert!(out.action.is_retrieve());
    }
}

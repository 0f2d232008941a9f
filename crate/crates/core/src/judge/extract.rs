//! Lenient tool-call extraction from free text.
//!
//! Two call shapes are recognised anywhere in the text:
//! - JSON-like objects `{"name": ..., "arguments": {...}}`, alone or in arrays;
//! - call syntax `name(key=value, ...)`.
//!
//! Values may use JSON, single quotes, Python literals, or (in call syntax)
//! unquoted text running up to the next `,` or `)`.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::ArgValue;

/// A value as written by the model. Unlike [`ArgValue`] it can hold null and
/// keeps numbers in their source spelling.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedValue {
    Null,
    Bool(bool),
    Number(String),
    Str(String),
    /// Unquoted text in call syntax.
    Bare(String),
    List(Vec<ParsedValue>),
    Map(Vec<(String, ParsedValue)>),
}

impl ParsedValue {
    pub fn to_json(&self) -> Value {
        match self {
            ParsedValue::Null => Value::Null,
            ParsedValue::Bool(b) => Value::Bool(*b),
            ParsedValue::Number(n) => serde_json::from_str::<serde_json::Number>(n)
                .map(Value::Number)
                .unwrap_or_else(|_| Value::String(n.clone())),
            ParsedValue::Str(s) | ParsedValue::Bare(s) => Value::String(s.clone()),
            ParsedValue::List(items) => Value::Array(items.iter().map(Self::to_json).collect()),
            ParsedValue::Map(entries) => Value::Object(
                entries
                    .iter()
                    .map(|(k, v)| (k.clone(), v.to_json()))
                    .collect(),
            ),
        }
    }

    /// Converts to the runtime value type; `None` when a null appears anywhere.
    pub fn to_arg_value(&self) -> Option<ArgValue> {
        ArgValue::from_json(self.to_json())
    }

    fn from_json(value: &Value) -> Self {
        match value {
            Value::Null => ParsedValue::Null,
            Value::Bool(b) => ParsedValue::Bool(*b),
            Value::Number(n) => ParsedValue::Number(n.to_string()),
            Value::String(s) => ParsedValue::Str(s.clone()),
            Value::Array(items) => ParsedValue::List(items.iter().map(Self::from_json).collect()),
            Value::Object(map) => ParsedValue::Map(
                map.iter()
                    .map(|(k, v)| (k.clone(), Self::from_json(v)))
                    .collect(),
            ),
        }
    }
}

impl Serialize for ParsedValue {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ParsedValue {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(Self::from_json(&Value::deserialize(deserializer)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedParam {
    /// Source text of the value, trimmed.
    pub raw: String,
    pub value: ParsedValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedCall {
    pub name: String,
    /// Keyed by normalized parameter name; positional arguments are `#0`, `#1`, ...
    pub params: IndexMap<String, ExtractedParam>,
}

/// Lowercase with all whitespace removed.
pub fn normalize_param_name(name: &str) -> String {
    name.chars()
        .filter(|c| !c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect()
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '.' | '-')
}

struct Parser<'a> {
    s: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(s: &'a str, pos: usize) -> Self {
        Self { s, pos }
    }

    fn rest(&self) -> &'a str {
        &self.s[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn string(&mut self) -> Option<String> {
        let quote = self.bump()?;
        let mut out = String::new();
        loop {
            match self.bump()? {
                c if c == quote => return Some(out),
                '\\' => match self.bump()? {
                    'n' => out.push('\n'),
                    't' => out.push('\t'),
                    'r' => out.push('\r'),
                    'b' => out.push('\u{8}'),
                    'f' => out.push('\u{c}'),
                    'u' => {
                        let hex = self.rest().get(..4)?;
                        let code = u32::from_str_radix(hex, 16).ok()?;
                        self.pos += 4;
                        out.push(char::from_u32(code).unwrap_or('\u{fffd}'));
                    }
                    other => out.push(other),
                },
                c => out.push(c),
            }
        }
    }

    fn number(&mut self) -> Option<String> {
        let start = self.pos;
        if matches!(self.peek(), Some('-' | '+')) {
            self.bump();
        }
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.peek().is_some_and(|c| c.is_ascii_digit()) {
                p.bump();
            }
            p.pos > s
        };
        let int = digits(self);
        let frac = self.eat('.') && digits(self);
        if !int && !frac {
            self.pos = start;
            return None;
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let save = self.pos;
            self.bump();
            if matches!(self.peek(), Some('-' | '+')) {
                self.bump();
            }
            if !digits(self) {
                self.pos = save;
            }
        }
        // a number glued to letters is a word, not a number
        if self.peek().is_some_and(|c| c.is_alphanumeric() || c == '_') {
            self.pos = start;
            return None;
        }
        Some(self.s[start..self.pos].to_string())
    }

    fn word(&mut self) -> Option<&'a str> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_alphanumeric() || c == '_') {
            self.bump();
        }
        (self.pos > start).then(|| &self.s[start..self.pos])
    }

    /// A literal: string, number, list, map, or keyword.
    fn value(&mut self) -> Option<ParsedValue> {
        self.ws();
        match self.peek()? {
            '"' | '\'' => self.string().map(ParsedValue::Str),
            '[' => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.ws();
                    if self.eat(']') {
                        return Some(ParsedValue::List(items));
                    }
                    items.push(self.value()?);
                    self.ws();
                    if !self.eat(',') {
                        self.ws();
                        return self.eat(']').then_some(ParsedValue::List(items));
                    }
                }
            }
            '{' => {
                self.bump();
                let mut entries = Vec::new();
                loop {
                    self.ws();
                    if self.eat('}') {
                        return Some(ParsedValue::Map(entries));
                    }
                    let key = match self.peek()? {
                        '"' | '\'' => self.string()?,
                        _ => self.word()?.to_string(),
                    };
                    self.ws();
                    if !self.eat(':') {
                        return None;
                    }
                    entries.push((key, self.value()?));
                    self.ws();
                    if !self.eat(',') {
                        self.ws();
                        return self.eat('}').then_some(ParsedValue::Map(entries));
                    }
                }
            }
            c if c.is_ascii_digit() || matches!(c, '-' | '+' | '.') => {
                self.number().map(ParsedValue::Number)
            }
            _ => {
                let start = self.pos;
                let value = match self.word()? {
                    "true" | "True" => ParsedValue::Bool(true),
                    "false" | "False" => ParsedValue::Bool(false),
                    "null" | "None" => ParsedValue::Null,
                    _ => {
                        self.pos = start;
                        return None;
                    }
                };
                Some(value)
            }
        }
    }

    /// Unquoted text up to the next `,` or `)` outside brackets.
    fn bare(&mut self) -> Option<String> {
        let start = self.pos;
        let mut depth = 0i32;
        while let Some(c) = self.peek() {
            match c {
                '(' | '[' | '{' => depth += 1,
                ')' | ']' | '}' if depth > 0 => depth -= 1,
                ',' | ')' if depth == 0 => break,
                '\n' => return None,
                _ => {}
            }
            self.bump();
        }
        let text = self.s[start..self.pos].trim();
        (!text.is_empty()).then(|| text.to_string())
    }

    /// One argument value in call syntax: a literal followed by `,`/`)`, or bare text.
    fn call_value(&mut self, allow_bare: bool) -> Option<(ParsedValue, String)> {
        self.ws();
        let start = self.pos;
        if let Some(v) = self.value() {
            let end = self.pos;
            self.ws();
            if matches!(self.peek(), Some(',' | ')')) {
                return Some((v, self.s[start..end].to_string()));
            }
        }
        if !allow_bare {
            return None;
        }
        self.pos = start;
        let text = self.bare()?;
        Some((ParsedValue::Bare(text.clone()), text))
    }

    /// `(args)` after a tool name; the cursor sits on `(`.
    fn call_args(&mut self) -> Option<IndexMap<String, ExtractedParam>> {
        if !self.eat('(') {
            return None;
        }
        let mut params = IndexMap::new();
        let mut positional = 0;
        loop {
            self.ws();
            if self.eat(')') {
                return Some(params);
            }
            // parameter names may contain inner spaces ("User Name=...")
            let name_len = self
                .rest()
                .find(|c: char| !(c.is_alphanumeric() || c == '_' || c.is_whitespace()))
                .unwrap_or(self.rest().len());
            let name = &self.rest()[..name_len];
            let named = !name.trim().is_empty()
                && self.rest()[name_len..].starts_with('=')
                && !self.rest()[name_len..].starts_with("==");
            let (key, (value, raw)) = match named {
                true => {
                    let key = normalize_param_name(name);
                    self.pos += name_len + 1;
                    (key, self.call_value(true)?)
                }
                false => {
                    let v = self.call_value(false)?;
                    positional += 1;
                    (format!("#{}", positional - 1), v)
                }
            };
            params.insert(
                key,
                ExtractedParam {
                    raw: raw.trim().to_string(),
                    value,
                },
            );
            self.ws();
            if !self.eat(',') {
                return self.eat(')').then_some(params);
            }
        }
    }
}

fn params_from_map(entries: Vec<(String, ParsedValue)>) -> IndexMap<String, ExtractedParam> {
    entries
        .into_iter()
        .map(|(k, v)| {
            let raw = match &v {
                ParsedValue::Str(s) | ParsedValue::Bare(s) => s.clone(),
                ParsedValue::Number(n) => n.clone(),
                other => other.to_json().to_string(),
            };
            (normalize_param_name(&k), ExtractedParam { raw, value: v })
        })
        .collect()
}

/// Interprets a parsed object as a call if it has a string `name` and
/// `arguments` (or `parameters`) given as a map or a string holding one.
fn call_from_object(entries: &[(String, ParsedValue)]) -> Option<ExtractedCall> {
    let get = |key: &str| entries.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v);
    if let Some(ParsedValue::Map(inner)) = get("function") {
        return call_from_object(inner);
    }
    let ParsedValue::Str(name) = get("name")? else {
        return None;
    };
    let name = name.trim();
    if name.is_empty() {
        return None;
    }
    let args = match get("arguments").or_else(|| get("parameters")) {
        None => Vec::new(),
        Some(ParsedValue::Map(m)) => m.clone(),
        Some(ParsedValue::Str(s)) => match Parser::new(s, 0).value()? {
            ParsedValue::Map(m) => m,
            _ => return None,
        },
        Some(_) => return None,
    };
    Some(ExtractedCall {
        name: name.to_string(),
        params: params_from_map(args),
    })
}

fn calls_from_value(value: &ParsedValue) -> Option<Vec<ExtractedCall>> {
    match value {
        ParsedValue::Map(entries) => call_from_object(entries).map(|c| vec![c]),
        ParsedValue::List(items) if !items.is_empty() => items
            .iter()
            .map(|item| match item {
                ParsedValue::Map(entries) => call_from_object(entries),
                _ => None,
            })
            .collect(),
        _ => None,
    }
}

/// Removes `<think>...</think>` segments (an unterminated one runs to the end).
pub fn strip_think(text: &str) -> String {
    let mut out = String::new();
    let mut rest = text;
    while let Some(start) = rest.find("<think>") {
        out.push_str(&rest[..start]);
        match rest[start..].find("</think>") {
            Some(end) => rest = &rest[start + end + "</think>".len()..],
            None => return out,
        }
    }
    out.push_str(rest);
    out
}

/// Extracts every tool call in order of appearance. Prose is ignored and
/// unparseable fragments are skipped.
pub fn extract_tool_calls(text: &str) -> Vec<ExtractedCall> {
    let text = strip_think(text);
    let s = text.as_str();
    let mut calls = Vec::new();
    let mut pos = 0;
    let mut prev: Option<char> = None;
    while pos < s.len() {
        let c = s[pos..].chars().next().expect("in bounds");
        if matches!(c, '[' | '{') {
            let mut p = Parser::new(s, pos);
            if let Some(found) = p.value().as_ref().and_then(calls_from_value) {
                calls.extend(found);
                pos = p.pos;
                prev = None;
                continue;
            }
        } else if is_name_char(c) && !prev.is_some_and(is_name_char) {
            let end = pos
                + s[pos..]
                    .find(|ch: char| !is_name_char(ch))
                    .unwrap_or(s.len() - pos);
            let name = &s[pos..end];
            if s[end..].starts_with('(') && name.chars().any(char::is_alphabetic) {
                let mut p = Parser::new(s, end);
                if let Some(params) = p.call_args() {
                    calls.push(ExtractedCall {
                        name: name.to_string(),
                        params,
                    });
                    pos = p.pos;
                    prev = Some(')');
                    continue;
                }
            }
        }
        prev = Some(c);
        pos += c.len_utf8();
    }
    calls
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(text: &str) -> ExtractedCall {
        let mut calls = extract_tool_calls(text);
        assert_eq!(calls.len(), 1, "{text}: {calls:?}");
        calls.remove(0)
    }

    #[test]
    fn json_form_with_prose() {
        let c = one(r#"Sure! [{"name":"f","arguments":{"x":1}}] done"#);
        assert_eq!(c.name, "f");
        assert_eq!(c.params["x"].value, ParsedValue::Number("1".into()));
    }

    #[test]
    fn call_form_quoting() {
        for text in [
            "search(q='Taylor Swift')",
            "search(q=\"Taylor Swift\")",
            "search(q=Taylor Swift)",
        ] {
            let c = one(text);
            assert_eq!(c.name, "search");
            assert_eq!(c.params["q"].raw.trim_matches(['\'', '"']), "Taylor Swift");
        }
    }

    #[test]
    fn dotted_names_and_lists() {
        let c = one("headset.feature_availability(feature='noise_cancellation', regions=['Europe', 'Asia'])");
        assert_eq!(c.name, "headset.feature_availability");
        assert_eq!(
            c.params["regions"].value,
            ParsedValue::List(vec![
                ParsedValue::Str("Europe".into()),
                ParsedValue::Str("Asia".into())
            ])
        );
    }

    #[test]
    fn param_names_normalized() {
        let c = one(r#"{"name": "f", "arguments": {"User Name": "a"}}"#);
        assert!(c.params.contains_key("username"));
    }

    #[test]
    fn string_arguments_and_python_literals() {
        let c = one(r#"{"name": "f", "arguments": "{\"a\": True, \"b\": None}"}"#);
        assert_eq!(c.params["a"].value, ParsedValue::Bool(true));
        assert_eq!(c.params["b"].value, ParsedValue::Null);
    }

    #[test]
    fn positional_literals_only() {
        let c = one("f('x', 2)");
        assert_eq!(c.params.keys().collect::<Vec<_>>(), ["#0", "#1"]);
        assert!(extract_tool_calls("the tool(s) we need").is_empty());
        assert_eq!(one("ping()").params.len(), 0);
    }

    #[test]
    fn think_is_ignored() {
        assert!(extract_tool_calls("<think>maybe f(x=1)</think>no calls here").is_empty());
        assert_eq!(
            extract_tool_calls("<think>a</think>g(y=2) and h(z=3)").len(),
            2
        );
    }

    #[test]
    fn non_call_json_is_skipped() {
        assert!(extract_tool_calls(r#"{"answer": 3} [1, 2]"#).is_empty());
        let calls = extract_tool_calls(r#"{"tool_calls": [{"name":"a","arguments":{}}]}"#);
        assert_eq!(calls.len(), 1);
    }

    #[test]
    fn word_boundary() {
        // "abc(" must not also yield "bc(" or "c("
        assert_eq!(extract_tool_calls("abc(x=1)").len(), 1);
        assert!(extract_tool_calls("3(x=1)").is_empty());
    }
}

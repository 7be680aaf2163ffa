//! Known-application database: JSON Lines, one entry per line.
//!
//! ```text
//! {"app":"snowflake","client":{"version":"feff","suites":"len:17"},"server":{"suite":"c02f"},"notes":"..."}
//! ```
//!
//! Sections are `client`, `server` and `stun`; their keys are the field
//! names of [`Field`] without the section prefix. Values are pattern
//! strings (`*`, `len:N`, `has:a,b`, or an exact comma-separated list);
//! booleans and integers are accepted as shorthand and arrays as exact
//! lists. Blank lines and lines starting with `#` are ignored.

use std::path::Path;

use rtcfp_core::fingerprint::{Field, FieldPattern, KnownAppEntry, PatternError};
use serde_json::{Map, Value};

pub const DEFAULT_DB: &str = include_str!("../assets/known_apps.jsonl");

#[derive(Debug, thiserror::Error)]
pub enum DbError {
    #[error("cannot read database: {0}")]
    Io(#[from] std::io::Error),
    #[error("database line {line}: {message}")]
    Line { line: usize, message: String },
}

fn line_err(line: usize, message: impl ToString) -> DbError {
    DbError::Line { line, message: message.to_string() }
}

fn pattern_text(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) if n.is_u64() => Some(n.to_string()),
        Value::Number(n) => n.as_f64().map(|f| f.to_string()),
        Value::Array(items) => {
            let parts: Option<Vec<String>> = items
                .iter()
                .map(|v| pattern_text(v).map(|s| s.replace('%', "%25").replace(',', "%2C")))
                .collect();
            parts.map(|p| p.join(","))
        }
        _ => None,
    }
}

fn parse_entry(obj: &Map<String, Value>, line: usize) -> Result<KnownAppEntry, DbError> {
    let app = obj.get("app").and_then(Value::as_str).ok_or_else(|| line_err(line, "missing \"app\""))?;
    let notes = match obj.get("notes") {
        None => "",
        Some(v) => v.as_str().ok_or_else(|| line_err(line, "\"notes\" must be a string"))?,
    };
    let mut entry = KnownAppEntry::new(app, notes);
    for (section, body) in obj {
        if section == "app" || section == "notes" {
            continue;
        }
        if !matches!(section.as_str(), "client" | "server" | "stun") {
            return Err(line_err(line, format!("unknown section {section:?}")));
        }
        let body = body.as_object().ok_or_else(|| line_err(line, format!("{section:?} must be an object")))?;
        for (key, value) in body {
            let name = format!("{section}.{key}");
            let field =
                Field::from_name(&name).ok_or_else(|| line_err(line, PatternError::UnknownField(name.clone())))?;
            let text = pattern_text(value).ok_or_else(|| line_err(line, format!("bad value for {name}")))?;
            let pattern = FieldPattern::parse(field, &text).map_err(|e| line_err(line, e))?;
            entry.patterns.insert(field, pattern);
        }
    }
    entry.validate().map_err(|e| line_err(line, e))?;
    Ok(entry)
}

pub fn parse_db(text: &str) -> Result<Vec<KnownAppEntry>, DbError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let value: Value = serde_json::from_str(trimmed).map_err(|e| line_err(line, e))?;
        let obj = value.as_object().ok_or_else(|| line_err(line, "entry must be a JSON object"))?;
        entries.push(parse_entry(obj, line)?);
    }
    Ok(entries)
}

pub fn load_db(path: Option<&Path>) -> Result<Vec<KnownAppEntry>, DbError> {
    match path {
        Some(p) => parse_db(&std::fs::read_to_string(p)?),
        None => parse_db(DEFAULT_DB),
    }
}

/// One database line for `entry`; [`parse_db`] reads it back unchanged.
pub fn entry_to_line(entry: &KnownAppEntry) -> String {
    let mut obj = Map::new();
    obj.insert("app".into(), Value::String(entry.app_name.clone()));
    for (field, pattern) in &entry.patterns {
        let (section, key) = field.name().split_once('.').expect("field names are dotted");
        let sect = obj.entry(section).or_insert_with(|| Value::Object(Map::new()));
        if let Value::Object(m) = sect {
            m.insert(key.to_string(), Value::String(pattern.to_string()));
        }
    }
    if !entry.notes.is_empty() {
        obj.insert("notes".into(), Value::String(entry.notes.clone()));
    }
    Value::Object(obj).to_string()
}

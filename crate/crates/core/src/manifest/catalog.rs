//! System broadcast catalog: one record per action with example extras.
//!
//! Line format: `<action>\t<key>:<kind>=<example>[;<key>:<kind>=<example>...]`
//! where kind is `str`, `int` or `bool`. Lines starting with `#` are comments
//! and are preserved, so `to_text(parse(text)) == text` for canonical input.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write;

use thiserror::Error;
use tracing::warn;

use super::{ExtraValue, Intent};

pub const SHIPPED_CATALOG: &str = include_str!("../../data/broadcast_intents.tsv");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CatalogError {
    #[error("line {line}: {reason}")]
    Invalid { line: usize, reason: String },
    #[error("line {line}: duplicate action {action}")]
    Duplicate { line: usize, action: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BroadcastIntentSpec {
    pub action: String,
    /// Ordered as written in the file.
    pub extras: Vec<(String, ExtraValue)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Line {
    Comment(String),
    Entry(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BroadcastCatalog {
    entries: Vec<BroadcastIntentSpec>,
    lines: Vec<Line>,
}

/// Result of resolving an action against the catalog. `unknown` is set when
/// the action had no entry and a bare broadcast was produced instead.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BroadcastLookup {
    pub intent: Intent,
    pub unknown: bool,
}

fn parse_extra(field: &str) -> Option<(String, ExtraValue)> {
    let (key, rest) = field.split_once(':')?;
    let (kind, example) = rest.split_once('=')?;
    if key.is_empty() {
        return None;
    }
    let value = match kind {
        "str" => ExtraValue::Str(example.to_string()),
        "int" => ExtraValue::Int(example.parse().ok()?),
        "bool" => ExtraValue::Bool(example.parse().ok()?),
        _ => return None,
    };
    Some((key.to_string(), value))
}

fn render_extra(key: &str, value: &ExtraValue) -> String {
    match value {
        ExtraValue::Str(s) => format!("{key}:str={s}"),
        ExtraValue::Int(i) => format!("{key}:int={i}"),
        ExtraValue::Bool(b) => format!("{key}:bool={b}"),
    }
}

impl BroadcastCatalog {
    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let mut entries = Vec::new();
        let mut lines = Vec::new();
        let mut seen = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.starts_with('#') {
                lines.push(Line::Comment(raw.to_string()));
                continue;
            }
            if raw.trim().is_empty() {
                continue;
            }
            let (action, extras_field) = raw.split_once('\t').unwrap_or((raw, ""));
            let action = action.trim();
            if action.is_empty() || action.contains(char::is_whitespace) {
                return Err(CatalogError::Invalid { line, reason: "bad action".into() });
            }
            if !seen.insert(action.to_string()) {
                return Err(CatalogError::Duplicate { line, action: action.to_string() });
            }
            let mut extras = Vec::new();
            for field in extras_field.split(';').filter(|f| !f.is_empty()) {
                let extra = parse_extra(field).ok_or_else(|| CatalogError::Invalid {
                    line,
                    reason: format!("bad extra `{field}`"),
                })?;
                extras.push(extra);
            }
            lines.push(Line::Entry(entries.len()));
            entries.push(BroadcastIntentSpec { action: action.to_string(), extras });
        }
        Ok(BroadcastCatalog { entries, lines })
    }

    pub fn shipped() -> Self {
        Self::parse(SHIPPED_CATALOG).expect("shipped broadcast catalog is valid")
    }

    pub fn entries(&self) -> &[BroadcastIntentSpec] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, action: &str) -> Option<&BroadcastIntentSpec> {
        self.entries.iter().find(|e| e.action == action)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            match line {
                Line::Comment(c) => {
                    out.push_str(c);
                }
                Line::Entry(i) => {
                    let e = &self.entries[*i];
                    let extras: Vec<String> =
                        e.extras.iter().map(|(k, v)| render_extra(k, v)).collect();
                    let _ = write!(out, "{}\t{}", e.action, extras.join(";"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Broadcast intent for `action` populated with the catalog's example extras.
pub fn lookup_broadcast_spec(action: &str, catalog: &BroadcastCatalog) -> BroadcastLookup {
    match catalog.get(action) {
        Some(spec) => BroadcastLookup {
            intent: Intent {
                action: spec.action.clone(),
                extras: spec.extras.iter().cloned().collect::<BTreeMap<_, _>>(),
                ..Default::default()
            },
            unknown: false,
        },
        None => {
            warn!(action, "broadcast action not in catalog; sending it without extras");
            BroadcastLookup { intent: Intent::broadcast(action), unknown: true }
        }
    }
}

//! Vision-language model prompting and response parsing, plus the text-value
//! generators used for input fields.

pub mod http;
pub mod mock;

use std::collections::BTreeMap;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::action::{parse_action, Action};
use crate::hierarchy::{LabeledScreenshot, Widget};

pub use http::HttpVlmClient;
pub use mock::{MockScript, MockVlmClient};

/// The labeled-screenshot prompt, including its one-shot example.
pub const PROMPT_TEMPLATE: &str = include_str!("../../data/prompt.txt");
/// Instruction preceding the widget description for text prediction.
pub const TEXT_PROMPT: &str = include_str!("../../data/text_prompt.txt");

pub const DEFAULT_MODEL: &str = "gpt-4o";
pub const MAX_PREDICTED_LEN: usize = 256;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum VlmError {
    #[error("response has no Steps list")]
    NoStepsLine,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint answered {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unusable response: {0}")]
    BadResponse(String),
    #[error("mock script has no response left for {0}")]
    ScriptExhausted(String),
    #[error("invalid mock script: {0}")]
    Script(String),
    #[error("model access is not configured: {0}")]
    NotConfigured(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VlmRequest {
    pub prompt_text: String,
    /// Labeled screenshot, PNG.
    pub image: Vec<u8>,
    pub model_hint: String,
    pub timeout: Duration,
    /// Component the screenshot was taken on; used to gate scripted replies.
    pub component: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VlmResponse {
    pub process: String,
    pub steps: Vec<Action>,
    pub summary: String,
    pub raw: String,
    /// Step tokens that were skipped.
    pub warnings: Vec<String>,
}

pub trait VlmClient {
    /// Sends a labeled screenshot with its prompt; returns the raw reply.
    fn send(&mut self, request: &VlmRequest) -> Result<String, VlmError>;
    /// Text-only completion, used for input value prediction.
    fn complete_text(&mut self, prompt: &str) -> Result<String, VlmError>;
}

pub fn build_prompt(labeled: &LabeledScreenshot, component: &str, model_hint: &str, timeout: Duration) -> VlmRequest {
    VlmRequest {
        prompt_text: PROMPT_TEMPLATE.to_string(),
        image: labeled.image.clone(),
        model_hint: model_hint.to_string(),
        timeout,
        component: component.to_string(),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Quote {
    None,
    Plain,
    /// Opened with `\"`, closed by the next `\"`.
    Escaped,
}

/// Splits the body of a steps list on top-level `;`, honoring quotes and
/// parentheses. Returns the items and the byte offset where the list ended.
fn split_steps(body: &str) -> (Vec<String>, usize) {
    let bytes = body.as_bytes();
    let mut items = Vec::new();
    let mut start = 0;
    let mut depth = 0i32;
    let mut quote = Quote::None;
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match quote {
            Quote::Plain => match c {
                b'\\' => i += 1,
                b'"' => quote = Quote::None,
                _ => {}
            },
            Quote::Escaped => {
                if c == b'\\' && bytes.get(i + 1) == Some(&b'"') {
                    quote = Quote::None;
                    i += 1;
                }
            }
            Quote::None => match c {
                b'\\' if bytes.get(i + 1) == Some(&b'"') => {
                    quote = Quote::Escaped;
                    i += 1;
                }
                b'"' => quote = Quote::Plain,
                b'(' => depth += 1,
                b')' => depth -= 1,
                b';' if depth <= 0 => {
                    items.push(body[start..i].to_string());
                    start = i + 1;
                }
                b']' if depth <= 0 => {
                    items.push(body[start..i].to_string());
                    return (items, i);
                }
                _ => {}
            },
        }
        i += 1;
    }
    items.push(body[start.min(body.len())..].to_string());
    (items, body.len())
}

/// Text following a `Label:` line marker, up to the end of that line.
fn labeled_line<'a>(raw: &'a str, label: &str) -> Option<&'a str> {
    raw.lines().find_map(|line| {
        let cleaned = line.trim_start_matches(|c: char| c == '*' || c == '#' || c == '-' || c.is_whitespace());
        let (head, rest) = cleaned.split_once(':')?;
        let head = head.trim_matches(|c: char| c == '*' || c.is_whitespace());
        head.eq_ignore_ascii_case(label).then(|| rest.trim_start_matches('*').trim())
    })
}

fn steps_start(raw: &str) -> Option<usize> {
    let lower = raw.to_ascii_lowercase();
    let mut from = 0;
    while let Some(pos) = lower[from..].find("steps") {
        let at = from + pos;
        let after = lower[at + 5..].trim_start_matches(['*', ' ']);
        if after.starts_with(':') {
            let colon = raw.len() - after.len();
            return raw[colon..].find('[').map(|b| colon + b);
        }
        from = at + 5;
    }
    None
}

/// Parses a reply in the Process/Steps/Summary format. A bare bracketed list
/// is accepted when there is no `Steps:` label. Unknown or malformed step
/// tokens are skipped and reported in `warnings`.
pub fn parse_response(raw: &str) -> Result<VlmResponse, VlmError> {
    let open = steps_start(raw).or_else(|| raw.find('[')).ok_or(VlmError::NoStepsLine)?;
    let (items, _) = split_steps(&raw[open + 1..]);
    let mut steps = Vec::new();
    let mut warnings = Vec::new();
    for item in items {
        let token = item.trim();
        if token.is_empty() {
            continue;
        }
        match parse_action(token).filter(Action::is_vision_vocabulary) {
            Some(a) => steps.push(a),
            None => {
                warn!(token, "skipping unrecognized step");
                warnings.push(token.to_string());
            }
        }
    }
    Ok(VlmResponse {
        process: labeled_line(raw, "process").unwrap_or("").to_string(),
        steps,
        summary: labeled_line(raw, "summary").unwrap_or("").to_string(),
        raw: raw.to_string(),
        warnings,
    })
}

/// Renders actions back into the steps-list syntax.
pub fn render_steps(steps: &[Action]) -> String {
    let mut out = String::from("[");
    for a in steps {
        out.push_str(&a.to_string());
        out.push_str("; ");
    }
    if !steps.is_empty() {
        out.truncate(out.len() - 1);
    }
    out.push(']');
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Text,
    Numeric,
}

/// Random stand-in value: eight lowercase letters, or an integer in 0..=999.
pub fn random_fallback_input<R: Rng + ?Sized>(kind: InputKind, rng: &mut R) -> String {
    match kind {
        InputKind::Text => (0..8).map(|_| rng.gen_range(b'a'..=b'z') as char).collect(),
        InputKind::Numeric => rng.gen_range(0..=999u32).to_string(),
    }
}

/// Attributes of `widget` that hint at what it expects.
pub fn widget_attrs(widget: &Widget) -> BTreeMap<String, String> {
    let mut attrs = BTreeMap::new();
    let id = widget.resource_id.rsplit('/').next().unwrap_or("");
    for (k, v) in [
        ("resource_id", id),
        ("hint", widget.hint.as_str()),
        ("content_desc", widget.content_desc.as_str()),
        ("text", widget.text.as_str()),
        ("class", widget.class_name.as_str()),
    ] {
        if !v.is_empty() {
            attrs.insert(k.to_string(), v.to_string());
        }
    }
    attrs
}

/// Asks the model for a plausible value for a field described by `attrs`.
/// Falls back to a random string on any failure.
pub fn predict_text_input<R: Rng + ?Sized>(
    client: &mut dyn VlmClient,
    attrs: &BTreeMap<String, String>,
    rng: &mut R,
) -> String {
    let informative = attrs.iter().any(|(k, v)| k != "class" && !v.trim().is_empty());
    if !informative {
        return random_fallback_input(InputKind::Text, rng);
    }
    let json = serde_json::to_string(attrs).expect("string maps always serialize");
    let prompt = format!("{TEXT_PROMPT}{json}\n");
    match client.complete_text(&prompt) {
        Ok(reply) => {
            let line = reply.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
            let line = line.trim_matches('"');
            if line.is_empty() {
                random_fallback_input(InputKind::Text, rng)
            } else {
                line.chars().take(MAX_PREDICTED_LEN).collect()
            }
        }
        Err(e) => {
            warn!(error = %e, "text prediction failed, using a random value");
            random_fallback_input(InputKind::Text, rng)
        }
    }
}

//! Scripted model client for deterministic runs.

use serde::Deserialize;

use super::{VlmClient, VlmError, VlmRequest};

const ANY: &str = "*";

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct VisionRecord {
    /// Component the reply is meant for, or `*`.
    #[serde(default = "any")]
    pub component: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct TextRecord {
    /// Substring the text prompt must contain, or `*`.
    #[serde(default = "any", rename = "match")]
    pub pattern: String,
    pub response: String,
}

fn any() -> String {
    ANY.to_string()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub vision: Vec<VisionRecord>,
    #[serde(default)]
    pub text: Vec<TextRecord>,
}

impl MockScript {
    /// Accepts either the full object form or a bare array of vision records.
    pub fn parse(json: &str) -> Result<Self, VlmError> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Form {
            Full(MockScript),
            Bare(Vec<VisionRecord>),
        }
        match serde_json::from_str::<Form>(json).map_err(|e| VlmError::Script(e.to_string()))? {
            Form::Full(s) => Ok(s),
            Form::Bare(vision) => Ok(MockScript { vision, text: Vec::new() }),
        }
    }
}

/// Replays scripted replies. Each record is used once, in order, and only
/// for a request from its component.
#[derive(Debug, Clone, Default)]
pub struct MockVlmClient {
    script: MockScript,
    vision_used: Vec<bool>,
    text_used: Vec<bool>,
    /// Components of every vision request received, in order.
    pub requests: Vec<String>,
    /// Text prompts received, in order.
    pub text_prompts: Vec<String>,
}

impl MockVlmClient {
    pub fn new(script: MockScript) -> Self {
        MockVlmClient {
            vision_used: vec![false; script.vision.len()],
            text_used: vec![false; script.text.len()],
            script,
            requests: Vec::new(),
            text_prompts: Vec::new(),
        }
    }

    pub fn remaining_vision(&self) -> usize {
        self.vision_used.iter().filter(|u| !**u).count()
    }
}

impl VlmClient for MockVlmClient {
    fn send(&mut self, request: &VlmRequest) -> Result<String, VlmError> {
        self.requests.push(request.component.clone());
        let pos = self
            .script
            .vision
            .iter()
            .zip(&self.vision_used)
            .position(|(r, used)| !used && (r.component == ANY || r.component == request.component))
            .ok_or_else(|| VlmError::ScriptExhausted(request.component.clone()))?;
        self.vision_used[pos] = true;
        Ok(self.script.vision[pos].response.clone())
    }

    fn complete_text(&mut self, prompt: &str) -> Result<String, VlmError> {
        self.text_prompts.push(prompt.to_string());
        let pos = self
            .script
            .text
            .iter()
            .zip(&self.text_used)
            .position(|(r, used)| !used && (r.pattern == ANY || prompt.contains(&r.pattern)))
            .ok_or_else(|| VlmError::ScriptExhausted("text prompt".into()))?;
        self.text_used[pos] = true;
        Ok(self.script.text[pos].response.clone())
    }
}

//! Client for OpenAI-compatible chat-completion endpoints.

use std::time::Duration;

use base64::Engine as _;
use serde_json::{json, Value};
use tracing::warn;

use super::{VlmClient, VlmError, VlmRequest, DEFAULT_MODEL};

pub const URL_VAR: &str = "VLMFUZZ_VLM_URL";
pub const KEY_VAR: &str = "VLMFUZZ_VLM_KEY";
pub const MODEL_VAR: &str = "VLMFUZZ_VLM_MODEL";

const RETRIES: u32 = 2;

#[derive(Debug, Clone)]
pub struct HttpVlmClient {
    /// Full chat-completions URL.
    pub url: String,
    pub api_key: String,
    pub model: String,
    pub timeout: Duration,
    /// Delay before the first retry; doubled for each further one.
    pub backoff: Duration,
}

impl HttpVlmClient {
    pub fn new(url: &str, api_key: &str) -> Self {
        HttpVlmClient {
            url: url.to_string(),
            api_key: api_key.to_string(),
            model: DEFAULT_MODEL.to_string(),
            timeout: Duration::from_secs(60),
            backoff: Duration::from_millis(500),
        }
    }

    /// Reads the endpoint, key and optional model from the environment.
    pub fn from_env() -> Result<Self, VlmError> {
        let url = std::env::var(URL_VAR).map_err(|_| VlmError::NotConfigured(format!("{URL_VAR} is not set")))?;
        let key = std::env::var(KEY_VAR).map_err(|_| VlmError::NotConfigured(format!("{KEY_VAR} is not set")))?;
        let mut client = Self::new(&url, &key);
        if let Ok(m) = std::env::var(MODEL_VAR) {
            client.model = m;
        }
        Ok(client)
    }

    fn post(&self, body: &Value, timeout: Duration) -> Result<String, VlmError> {
        let mut delay = self.backoff;
        let mut attempt = 0;
        loop {
            let result = ureq::post(&self.url)
                .timeout(timeout)
                .set("Authorization", &format!("Bearer {}", self.api_key))
                .send_json(body.clone());
            match result {
                Ok(resp) => {
                    let v: Value = resp.into_json().map_err(|e| VlmError::BadResponse(e.to_string()))?;
                    return v["choices"][0]["message"]["content"]
                        .as_str()
                        .map(str::to_string)
                        .ok_or_else(|| VlmError::BadResponse("no choices[0].message.content".into()));
                }
                Err(ureq::Error::Status(status, resp)) => {
                    let body = resp.into_string().unwrap_or_default();
                    return Err(VlmError::Http { status, body });
                }
                Err(ureq::Error::Transport(t)) => {
                    if attempt >= RETRIES {
                        return Err(VlmError::Transport(t.to_string()));
                    }
                    warn!(error = %t, attempt, "model request failed, retrying");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
            }
        }
    }
}

impl VlmClient for HttpVlmClient {
    fn send(&mut self, request: &VlmRequest) -> Result<String, VlmError> {
        let image = base64::engine::general_purpose::STANDARD.encode(&request.image);
        let model = if request.model_hint.is_empty() { &self.model } else { &request.model_hint };
        let body = json!({
            "model": model,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": request.prompt_text},
                    {"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{image}")}}
                ]
            }]
        });
        self.post(&body, request.timeout)
    }

    fn complete_text(&mut self, prompt: &str) -> Result<String, VlmError> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}]
        });
        self.post(&body, self.timeout)
    }
}

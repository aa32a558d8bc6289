//! HTTP transport speaking the chat-completions JSON contract of common
//! local inference servers: POST {model, messages, temperature, max_tokens},
//! completion text at `choices[0].message.content`.

use std::time::Duration;

use serde_json::{json, Value};

use super::{GenerationConfig, Transport, TransportFailure};
use crate::promptkit::PromptBundle;

pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    token: Option<String>,
}

impl HttpTransport {
    /// `base_url` is the server root; the standard completions path is
    /// appended unless the URL already ends with it.
    pub fn new(base_url: &str, token: Option<String>) -> Self {
        let trimmed = base_url.trim_end_matches('/');
        let url = if trimmed.ends_with("/chat/completions") {
            trimmed.to_string()
        } else {
            format!("{trimmed}/v1/chat/completions")
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .expect("http client builds");
        HttpTransport { client, url, token }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn request_body(bundle: &PromptBundle, config: &GenerationConfig) -> Value {
        let mut messages = Vec::new();
        if !bundle.system.is_empty() {
            messages.push(json!({"role": "system", "content": bundle.system}));
        }
        messages.push(json!({"role": "user", "content": bundle.user}));
        // greedy decoding: pin temperature to 0 and top_p to 1 regardless of
        // the configured temperature
        let (temperature, top_p) = if config.sampling_enabled {
            (config.temperature, None)
        } else {
            (0.0, Some(1.0))
        };
        let mut body = json!({
            "model": config.model_id,
            "messages": messages,
            "temperature": temperature,
            "max_tokens": config.max_new_tokens,
        });
        if let Some(top_p) = top_p {
            body["top_p"] = json!(top_p);
        }
        body
    }
}

impl Transport for HttpTransport {
    fn send(
        &self,
        bundle: &PromptBundle,
        config: &GenerationConfig,
    ) -> Result<String, TransportFailure> {
        let mut request = self
            .client
            .post(&self.url)
            .json(&Self::request_body(bundle, config));
        if let Some(token) = &self.token {
            request = request.bearer_auth(token);
        }
        let response = request
            .send()
            .map_err(|e| TransportFailure::Retryable(format!("transport: {e}")))?;

        let status = response.status();
        if status.is_server_error() {
            return Err(TransportFailure::Retryable(format!("http {status}")));
        }
        if !status.is_success() {
            return Err(TransportFailure::Fatal(format!("http {status}")));
        }

        let body: Value = response
            .json()
            .map_err(|e| TransportFailure::Fatal(format!("malformed response json: {e}")))?;
        body.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| {
                TransportFailure::Fatal("response lacks choices[0].message.content".into())
            })
    }
}

//! Blocking HTTP clients for chat and embedding services.

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::header::{AUTHORIZATION, CONTENT_TYPE};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::wire;
use super::{BackendError, BackendRequest, ChatBackend, EmbeddingProvider, ProviderError};
use crate::retrieve::{Clip, Embedding};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpSettings {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub timeout: Duration,
    /// Extra attempts after the first one, on transport failures and on 429
    /// or 5xx responses. Other statuses and well-formed replies never retry.
    pub retries: u32,
    /// Delay before the first retry; doubled on every further retry.
    pub backoff: Duration,
}

impl Default for HttpSettings {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "gpt-4o-2024-05-13".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            timeout: Duration::from_secs(120),
            retries: 3,
            backoff: Duration::from_millis(500),
        }
    }
}

struct JsonClient {
    client: Client,
    settings: HttpSettings,
    api_key: Option<String>,
}

impl JsonClient {
    fn new(settings: HttpSettings) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(settings.timeout)
            .build()
            .map_err(|e| BackendError::InvalidRequest(format!("cannot build HTTP client: {e}")))?;
        let api_key = settings
            .api_key_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok())
            .filter(|k| !k.is_empty());
        Ok(Self {
            client,
            settings,
            api_key,
        })
    }

    fn post(&self, body: &Value) -> Result<Value, BackendError> {
        let payload = serde_json::to_vec(body).map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        let attempts = self.settings.retries + 1;
        let mut last_failure = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.settings.backoff * 2u32.saturating_pow(attempt - 1));
            }
            let mut req = self
                .client
                .post(&self.settings.endpoint)
                .header(CONTENT_TYPE, "application/json")
                .body(payload.clone());
            if let Some(key) = &self.api_key {
                req = req.header(AUTHORIZATION, format!("Bearer {key}"));
            }
            let resp = match req.send() {
                Ok(resp) => resp,
                Err(e) => {
                    tracing::warn!(attempt, error = %e, "request failed");
                    last_failure = e.to_string();
                    continue;
                }
            };
            let status = resp.status();
            if status.as_u16() == 429 || status.is_server_error() {
                tracing::warn!(attempt, %status, "retryable status");
                last_failure = format!("HTTP {status}");
                continue;
            }
            let text = match resp.text() {
                Ok(text) => text,
                Err(e) => {
                    last_failure = e.to_string();
                    continue;
                }
            };
            if !status.is_success() {
                return Err(BackendError::Status {
                    status: status.as_u16(),
                    body: text,
                });
            }
            return serde_json::from_str(&text)
                .map_err(|e| BackendError::MissingText(format!("response is not JSON ({e}): {text}")));
        }
        Err(BackendError::Transport {
            attempts,
            message: last_failure,
        })
    }
}

/// Chat-completions client. Frames travel inline as base64 PNG.
pub struct HttpChatBackend {
    inner: JsonClient,
}

impl HttpChatBackend {
    pub fn new(settings: HttpSettings) -> Result<Self, BackendError> {
        Ok(Self {
            inner: JsonClient::new(settings)?,
        })
    }
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        let body = wire::chat_body(&self.inner.settings.model, request)?;
        let response = self.inner.post(&body)?;
        wire::parse_chat_response(&response)
    }
}

/// Embedding service client; the dimension is fixed by a handshake call.
pub struct HttpEmbeddingProvider {
    inner: JsonClient,
    dimension: usize,
}

impl HttpEmbeddingProvider {
    pub fn connect(settings: HttpSettings) -> Result<Self, ProviderError> {
        let inner = JsonClient::new(settings).map_err(|e| ProviderError::new(e.to_string()))?;
        let info = inner
            .post(&wire::embed_info_body(&inner.settings.model))
            .map_err(|e| ProviderError::new(e.to_string()))?;
        let dimension = wire::parse_dimension(&info)?;
        Ok(Self { inner, dimension })
    }

    fn check(&self, index: Option<usize>, e: &Embedding) -> Result<(), ProviderError> {
        if e.dimension() != self.dimension {
            return Err(ProviderError {
                clip: index,
                message: format!("embedding has dimension {}, handshake declared {}", e.dimension(), self.dimension),
            });
        }
        Ok(())
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_clips(&self, clips: &[Clip<'_>]) -> Result<Vec<(usize, Embedding)>, ProviderError> {
        let body = wire::embed_clips_body(&self.inner.settings.model, clips)?;
        let response = self.inner.post(&body).map_err(|e| ProviderError::new(e.to_string()))?;
        let embeddings = wire::parse_embeddings(&response)?;
        for (index, e) in &embeddings {
            self.check(Some(*index), e)?;
        }
        Ok(embeddings)
    }

    fn embed_text(&self, query: &str) -> Result<Embedding, ProviderError> {
        let body = wire::embed_text_body(&self.inner.settings.model, query);
        let response = self.inner.post(&body).map_err(|e| ProviderError::new(e.to_string()))?;
        let (_, e) = wire::parse_embeddings(&response)?
            .into_iter()
            .next()
            .ok_or_else(|| ProviderError::new("text embedding response is empty"))?;
        self.check(None, &e)?;
        Ok(e)
    }
}

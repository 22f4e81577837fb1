//! Model backends: chat completion over text and frames, and clip/text
//! embedding providers.

pub mod http;
pub mod scripted;
pub mod wire;

use std::sync::Arc;

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::frame::FrameSequence;
use crate::retrieve::{Clip, Embedding};

pub use http::{HttpChatBackend, HttpEmbeddingProvider, HttpSettings};
pub use scripted::{ScriptedBackend, ScriptedReply};

pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("script exhausted at step {step}")]
    ScriptExhausted { step: usize },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("backend response has no text: {0}")]
    MissingText(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cannot encode frame: {0}")]
    Encode(String),
}

/// Embedding failure, tagged with the clip it concerns when there is one.
#[derive(Debug, Error)]
#[error("embedding provider failed{}: {message}", clip.map(|c| format!(" on clip {c}")).unwrap_or_default())]
pub struct ProviderError {
    pub clip: Option<usize>,
    pub message: String,
}

impl ProviderError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            clip: None,
            message: message.into(),
        }
    }

    pub fn for_clip(clip: usize, message: impl Into<String>) -> Self {
        Self {
            clip: Some(clip),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    System,
    User,
    Assistant,
    ToolObservation,
}

/// Frames shown to the model with a user turn.
#[derive(Debug, Clone)]
pub struct FrameAttachment {
    pub memory_version: u64,
    pub frames: Arc<FrameSequence>,
}

impl Serialize for FrameAttachment {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("FrameAttachment", 2)?;
        s.serialize_field("memory_version", &self.memory_version)?;
        s.serialize_field("timestamps", &self.frames.timestamps())?;
        s.end()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChatTurn {
    pub role: Role,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames: Option<FrameAttachment>,
    /// Step whose tool execution produced this observation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
}

impl ChatTurn {
    pub fn system(text: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            text: text.into(),
            frames: None,
            step: None,
        }
    }

    pub fn user(text: impl Into<String>, frames: Option<FrameAttachment>) -> Self {
        Self {
            role: Role::User,
            text: text.into(),
            frames,
            step: None,
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            text: text.into(),
            frames: None,
            step: None,
        }
    }

    pub fn observation(step: usize, text: impl Into<String>) -> Self {
        Self {
            role: Role::ToolObservation,
            text: text.into(),
            frames: None,
            step: Some(step),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for Decoding {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BackendRequest {
    pub turns: Vec<ChatTurn>,
    pub decoding: Decoding,
}

impl BackendRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !self.turns.iter().any(|t| t.role == Role::User) {
            return Err(BackendError::InvalidRequest("request has no user turn".into()));
        }
        if let Some(t) = self.turns.iter().find(|t| t.frames.is_some() && t.role != Role::User) {
            return Err(BackendError::InvalidRequest(format!(
                "frames may only be attached to user turns, found {:?}",
                t.role
            )));
        }
        Ok(())
    }
}

/// A multimodal chat model. Implementations must tolerate concurrent calls
/// from independent sessions.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError>;
}

/// Clip and text encoder used for moment retrieval.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;

    /// One embedding per clip, keyed by clip index.
    fn embed_clips(&self, clips: &[Clip<'_>]) -> Result<Vec<(usize, Embedding)>, ProviderError>;

    fn embed_text(&self, query: &str) -> Result<Embedding, ProviderError>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Arc<P> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed_clips(&self, clips: &[Clip<'_>]) -> Result<Vec<(usize, Embedding)>, ProviderError> {
        (**self).embed_clips(clips)
    }

    fn embed_text(&self, query: &str) -> Result<Embedding, ProviderError> {
        (**self).embed_text(query)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Arc<B> {
    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

//! JSON bodies exchanged with HTTP chat and embedding services.
//!
//! The chat body follows the chat-completions shape: a `messages` array whose
//! `content` is either a string or a list of `text` / `image_url` parts.
//! `docs/wire.md` documents every field.

use std::io::Cursor;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use image::RgbImage;
use serde_json::{json, Map, Value};

use super::{BackendError, BackendRequest, ProviderError, Role};
use crate::retrieve::{Clip, Embedding};

pub const OBSERVATION_PREFIX: &str = "OBSERVATION (step ";
const PNG_DATA_URL: &str = "data:image/png;base64,";

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, BackendError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .map_err(|e| BackendError::Encode(e.to_string()))?;
    Ok(buf.into_inner())
}

pub fn encode_png_base64(img: &RgbImage) -> Result<String, BackendError> {
    Ok(STANDARD.encode(encode_png(img)?))
}

/// Integral values are written as JSON integers, so the default temperature
/// appears as `0`.
fn number(x: f64) -> Value {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        json!(x as i64)
    } else {
        json!(x)
    }
}

fn observation_text(step: usize, text: &str) -> String {
    format!("{OBSERVATION_PREFIX}{step}):\n{text}")
}

/// Serializes a request. Only the most recent frame-bearing turn carries
/// images; older attachments are replaced by a short text note.
pub fn chat_body(model: &str, request: &BackendRequest) -> Result<Value, BackendError> {
    request.validate()?;
    let latest_frames = request.turns.iter().rposition(|t| t.frames.is_some());
    let mut messages = Vec::with_capacity(request.turns.len());
    for (n, turn) in request.turns.iter().enumerate() {
        let message = match turn.role {
            Role::System => json!({"role": "system", "content": turn.text}),
            Role::Assistant => json!({"role": "assistant", "content": turn.text}),
            Role::ToolObservation => {
                let step = turn.step.ok_or_else(|| {
                    BackendError::InvalidRequest("observation turn without a step index".into())
                })?;
                json!({"role": "user", "content": [{"type": "text", "text": observation_text(step, &turn.text)}]})
            }
            Role::User => {
                let mut parts = vec![json!({"type": "text", "text": turn.text})];
                if let Some(att) = &turn.frames {
                    if Some(n) == latest_frames {
                        for frame in att.frames.frames() {
                            let url = format!("{PNG_DATA_URL}{}", encode_png_base64(frame.pixels())?);
                            parts.push(json!({"type": "image_url", "image_url": {"url": url}}));
                        }
                    } else {
                        parts.push(json!({
                            "type": "text",
                            "text": format!("[frames of memory version {} omitted]", att.memory_version),
                        }));
                    }
                }
                json!({"role": "user", "content": parts})
            }
        };
        messages.push(message);
    }
    let mut body = Map::new();
    body.insert("model".into(), json!(model));
    body.insert("messages".into(), Value::Array(messages));
    body.insert("temperature".into(), number(request.decoding.temperature));
    body.insert("max_tokens".into(), json!(request.decoding.max_tokens));
    Ok(Value::Object(body))
}

/// Turn structure recovered from a chat body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireTurn {
    pub role: Role,
    pub text: String,
    pub step: Option<usize>,
    pub images: usize,
}

pub fn parse_chat_body(body: &Value) -> Result<Vec<WireTurn>, String> {
    let messages = body
        .get("messages")
        .and_then(Value::as_array)
        .ok_or("body has no messages array")?;
    messages
        .iter()
        .map(|m| {
            let role = m.get("role").and_then(Value::as_str).ok_or("message without role")?;
            let content = m.get("content").ok_or("message without content")?;
            let (texts, images) = match content {
                Value::String(s) => (vec![s.clone()], 0),
                Value::Array(parts) => {
                    let mut texts = Vec::new();
                    let mut images = 0;
                    for part in parts {
                        match part.get("type").and_then(Value::as_str) {
                            Some("text") => texts.push(
                                part.get("text")
                                    .and_then(Value::as_str)
                                    .ok_or("text part without text")?
                                    .to_string(),
                            ),
                            Some("image_url") => images += 1,
                            other => return Err(format!("unknown content part {other:?}")),
                        }
                    }
                    (texts, images)
                }
                _ => return Err("content must be a string or an array".into()),
            };
            let first = texts.first().cloned().unwrap_or_default();
            let turn = match role {
                "system" => WireTurn { role: Role::System, text: first, step: None, images },
                "assistant" => WireTurn { role: Role::Assistant, text: first, step: None, images },
                "user" => match first.strip_prefix(OBSERVATION_PREFIX).and_then(|rest| rest.split_once("):\n")) {
                    Some((step, text)) if images == 0 => WireTurn {
                        role: Role::ToolObservation,
                        text: text.to_string(),
                        step: Some(step.parse().map_err(|_| "bad observation step")?),
                        images,
                    },
                    _ => WireTurn { role: Role::User, text: first, step: None, images },
                },
                other => return Err(format!("unknown role {other}")),
            };
            Ok(turn)
        })
        .collect()
}

/// Text of the first choice.
pub fn parse_chat_response(body: &Value) -> Result<String, BackendError> {
    let message = body
        .get("choices")
        .and_then(Value::as_array)
        .and_then(|c| c.first())
        .and_then(|c| c.get("message"))
        .ok_or_else(|| BackendError::MissingText(truncate(&body.to_string())))?;
    match message.get("content") {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Array(parts)) => {
            let text: Vec<&str> = parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect();
            if text.is_empty() {
                Err(BackendError::MissingText(truncate(&message.to_string())))
            } else {
                Ok(text.concat())
            }
        }
        _ => Err(BackendError::MissingText(truncate(&message.to_string()))),
    }
}

pub fn embed_info_body(model: &str) -> Value {
    json!({"model": model, "input": {"kind": "info"}})
}

pub fn embed_clips_body(model: &str, clips: &[Clip<'_>]) -> Result<Value, ProviderError> {
    let clips = clips
        .iter()
        .map(|clip| {
            let frames = clip
                .frames
                .iter()
                .map(|f| encode_png_base64(f.pixels()).map_err(|e| ProviderError::for_clip(clip.index, e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(json!({
                "index": clip.index,
                "start_s": clip.span.start(),
                "end_s": clip.span.end(),
                "frames": frames,
            }))
        })
        .collect::<Result<Vec<_>, ProviderError>>()?;
    Ok(json!({"model": model, "input": {"kind": "clips", "clips": clips}}))
}

pub fn embed_text_body(model: &str, text: &str) -> Value {
    json!({"model": model, "input": {"kind": "text", "text": text}})
}

pub fn parse_dimension(body: &Value) -> Result<usize, ProviderError> {
    body.get("dimension")
        .and_then(Value::as_u64)
        .filter(|&d| d > 0)
        .map(|d| d as usize)
        .ok_or_else(|| ProviderError::new(format!("handshake response lacks a positive dimension: {}", truncate(&body.to_string()))))
}

pub fn parse_embeddings(body: &Value) -> Result<Vec<(usize, Embedding)>, ProviderError> {
    let items = body
        .get("embeddings")
        .and_then(Value::as_array)
        .ok_or_else(|| ProviderError::new("response has no embeddings array"))?;
    items
        .iter()
        .map(|item| {
            let index = item
                .get("index")
                .and_then(Value::as_u64)
                .ok_or_else(|| ProviderError::new("embedding without index"))? as usize;
            let values = item
                .get("values")
                .and_then(Value::as_array)
                .ok_or_else(|| ProviderError::for_clip(index, "embedding without values"))?
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| ProviderError::for_clip(index, "non-numeric component")))
                .collect::<Result<Vec<f64>, _>>()?;
            let embedding = Embedding::new(values).map_err(|e| ProviderError::for_clip(index, e.to_string()))?;
            Ok((index, embedding))
        })
        .collect()
}

fn truncate(s: &str) -> String {
    const MAX: usize = 300;
    if s.len() <= MAX {
        s.to_string()
    } else {
        let mut end = MAX;
        while !s.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}...", &s[..end])
    }
}

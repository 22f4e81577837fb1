//! Deterministic stand-in chat model that replays queued replies.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Mutex;

use super::{BackendError, BackendRequest, ChatBackend};

type ReplyFn = Box<dyn Fn(&BackendRequest) -> String + Send + Sync>;

pub enum ScriptedReply {
    Text(String),
    /// Reply computed from the request, e.g. by reading the last observation.
    Reactive(ReplyFn),
}

impl ScriptedReply {
    pub fn reactive(f: impl Fn(&BackendRequest) -> String + Send + Sync + 'static) -> Self {
        Self::Reactive(Box::new(f))
    }
}

impl fmt::Debug for ScriptedReply {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Text(t) => f.debug_tuple("Text").field(t).finish(),
            Self::Reactive(_) => f.write_str("Reactive(..)"),
        }
    }
}

impl From<&str> for ScriptedReply {
    fn from(text: &str) -> Self {
        Self::Text(text.to_string())
    }
}

impl From<String> for ScriptedReply {
    fn from(text: String) -> Self {
        Self::Text(text)
    }
}

#[derive(Debug, Default)]
struct ScriptState {
    queue: VecDeque<ScriptedReply>,
    calls: usize,
}

/// Pops one reply per call; the call after the last reply fails.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    state: Mutex<ScriptState>,
}

impl ScriptedBackend {
    pub fn new<I, R>(replies: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: Into<ScriptedReply>,
    {
        Self {
            state: Mutex::new(ScriptState {
                queue: replies.into_iter().map(Into::into).collect(),
                calls: 0,
            }),
        }
    }

    /// Reads a JSON array of reply strings.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let replies: Vec<String> = serde_json::from_str(text)?;
        Ok(Self::new(replies))
    }

    pub fn calls(&self) -> usize {
        self.state.lock().unwrap_or_else(|p| p.into_inner()).calls
    }

    pub fn remaining(&self) -> usize {
        self.state.lock().unwrap_or_else(|p| p.into_inner()).queue.len()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        request.validate()?;
        let mut state = self.state.lock().unwrap_or_else(|p| p.into_inner());
        let step = state.calls;
        let reply = state
            .queue
            .pop_front()
            .ok_or(BackendError::ScriptExhausted { step })?;
        state.calls += 1;
        Ok(match reply {
            ScriptedReply::Text(text) => text,
            ScriptedReply::Reactive(f) => f(request),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{ChatTurn, Decoding};

    fn request() -> BackendRequest {
        BackendRequest {
            turns: vec![ChatTurn::user("q", None)],
            decoding: Decoding::default(),
        }
    }

    #[test]
    fn replays_in_order_then_fails() {
        let backend = ScriptedBackend::new(["A", "B"]);
        assert_eq!(backend.complete(&request()).unwrap(), "A");
        assert_eq!(backend.complete(&request()).unwrap(), "B");
        let err = backend.complete(&request()).unwrap_err();
        assert_eq!(err.to_string(), "script exhausted at step 2");
    }

    #[test]
    fn reactive_reply_sees_request() {
        let backend = ScriptedBackend::new([ScriptedReply::reactive(|r| r.turns.len().to_string())]);
        assert_eq!(backend.complete(&request()).unwrap(), "1");
    }

    #[test]
    fn rejects_request_without_user_turn() {
        let backend = ScriptedBackend::new(["A"]);
        let req = BackendRequest {
            turns: vec![ChatTurn::system("s")],
            decoding: Decoding::default(),
        };
        assert!(matches!(backend.complete(&req), Err(BackendError::InvalidRequest(_))));
        assert_eq!(backend.remaining(), 1);
    }
}

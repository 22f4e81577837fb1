//! The reasoning loop: prompt, parse, act on the video memory, repeat, and
//! force an answer once the step budget is spent.

pub mod action;
pub mod dispatch;
pub mod prompt;
pub mod response;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::backends::{BackendRequest, ChatBackend, ChatTurn, Decoding, EmbeddingProvider, FrameAttachment};
use crate::frame::FrameSequence;
use crate::ingest::{sample_frames, IngestError, SamplingSpec, VideoSource};
use crate::memory::{LineageEntry, MemoryError, VideoMemory};
use crate::render::BarStyle;
use crate::retrieve::RetrievalConfig;

pub use action::{parse_action, parse_action_with, ActionError, ActionErrorKind, ToolCall, ToolName, Toolset};
pub use dispatch::{dispatch, ToolContext, ToolError};
pub use prompt::{build_init_prompt, PromptTemplate};
pub use response::{parse_response, ParsedStep};

/// Version of the tool semantics recorded in traces.
pub const TOOL_VERSION: &str = "1";
pub const DEFAULT_MAX_STEPS: usize = 3;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("no tools are enabled")]
    EmptyToolset,
    #[error("max_steps must be at least 1")]
    ZeroSteps,
    #[error("prompt template: {0}")]
    Prompt(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub max_steps: usize,
    pub sampling: SamplingSpec,
    pub toolset: Toolset,
    pub retrieval: RetrievalConfig,
    pub style: BarStyle,
    pub decoding: Decoding,
    pub template: PromptTemplate,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
            sampling: SamplingSpec::default(),
            toolset: Toolset::default(),
            retrieval: RetrievalConfig::default(),
            style: BarStyle::default(),
            decoding: Decoding::default(),
            template: PromptTemplate::builtin(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.max_steps == 0 {
            return Err(AgentError::ZeroSteps);
        }
        if self.toolset.is_empty() {
            return Err(AgentError::EmptyToolset);
        }
        self.sampling.validate()?;
        self.template.validate()
    }

    /// Settings that shape a session, keyed like the config file.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let mut pairs = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            pairs.insert(k.to_string(), v);
        };
        put("max_steps", self.max_steps.to_string());
        put("n_frames", self.sampling.n_frames.to_string());
        put("long_side", self.sampling.long_side.to_string());
        put("tools", self.toolset.to_string());
        put("fps", self.retrieval.fps.to_string());
        put("clip_len", self.retrieval.clip_len.to_string());
        put("k", self.retrieval.k.to_string());
        put("temperature", self.decoding.temperature.to_string());
        put("max_tokens", self.decoding.max_tokens.to_string());
        pairs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TerminatedBy {
    #[serde(rename = "model")]
    Model,
    #[serde(rename = "forced-at-T")]
    ForcedAtT,
    #[serde(rename = "error")]
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct CallRecord {
    pub call: ToolCall,
    pub ok: bool,
    pub observation: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub response: String,
    pub parsed: ParsedStep,
    pub calls: Vec<CallRecord>,
    /// Parse problem fed back to the model instead of running tools.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    pub memory_version: u64,
    pub forced: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionTrace {
    pub question: String,
    pub video: String,
    pub video_id: String,
    pub duration_s: f64,
    pub prompt_version: String,
    pub tool_version: String,
    pub config: BTreeMap<String, String>,
    pub turns: Vec<ChatTurn>,
    pub steps: Vec<StepRecord>,
    pub final_answer: Option<String>,
    pub terminated_by: TerminatedBy,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub lineage: Vec<LineageEntry>,
}

impl SessionTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

/// Memory contents as they stood after a given step.
#[derive(Debug, Clone)]
pub struct MemorySnapshot {
    pub version: u64,
    pub step: usize,
    pub frames: Arc<FrameSequence>,
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub answer: Option<String>,
    pub trace: SessionTrace,
    pub snapshots: Vec<MemorySnapshot>,
}

const NO_ACTION: &str = "The reply had no ACTION block. Reply with THOUGHT and ACTION, \
or with ANSWER followed by TERMINATE when you are done.";
const NO_THOUGHT: &str = "note: the reply had no THOUGHT section.";

fn attachment(memory: &VideoMemory) -> FrameAttachment {
    FrameAttachment {
        memory_version: memory.version(),
        frames: memory.shared_current(),
    }
}

fn answer_of(parsed: &ParsedStep, raw: &str) -> String {
    parsed
        .answer
        .clone()
        .or_else(|| (!parsed.thought.is_empty()).then(|| parsed.thought.clone()))
        .unwrap_or_else(|| raw.trim().to_string())
}

struct Session<'a> {
    trace: SessionTrace,
    memory: VideoMemory,
    snapshots: Vec<MemorySnapshot>,
    backend: &'a dyn ChatBackend,
    decoding: Decoding,
}

impl Session<'_> {
    fn ask(&mut self) -> Result<String, String> {
        let request = BackendRequest {
            turns: self.trace.turns.clone(),
            decoding: self.decoding,
        };
        self.backend.complete(&request).map_err(|e| e.to_string())
    }

    fn finish(mut self, answer: Option<String>, by: TerminatedBy, error: Option<String>) -> SessionOutcome {
        self.trace.final_answer = answer.clone();
        self.trace.terminated_by = by;
        self.trace.error = error;
        self.trace.lineage = self.memory.lineage().to_vec();
        SessionOutcome {
            answer,
            trace: self.trace,
            snapshots: self.snapshots,
        }
    }
}

/// Runs one question against `source`. Setup problems are errors; once the
/// session starts, a backend failure ends it with `TerminatedBy::Error` and
/// the partial trace.
pub fn run_session(
    source: &VideoSource,
    question: &str,
    backend: &dyn ChatBackend,
    provider: Option<&dyn EmbeddingProvider>,
    cfg: &AgentConfig,
) -> Result<SessionOutcome, AgentError> {
    if question.trim().is_empty() {
        return Err(AgentError::EmptyQuestion);
    }
    cfg.validate()?;
    let memory = VideoMemory::new(sample_frames(source, &cfg.sampling, None)?)?;
    let turns = build_init_prompt(question, &cfg.template, &cfg.toolset, attachment(&memory))?;
    let ctx = ToolContext {
        source,
        provider,
        sampling: &cfg.sampling,
        retrieval: &cfg.retrieval,
        style: &cfg.style,
    };
    let mut session = Session {
        trace: SessionTrace {
            question: question.trim().to_string(),
            video: source.path().display().to_string(),
            video_id: source.video_id(),
            duration_s: source.duration(),
            prompt_version: cfg.template.version.clone(),
            tool_version: TOOL_VERSION.into(),
            config: cfg.to_pairs(),
            turns,
            steps: Vec::new(),
            final_answer: None,
            terminated_by: TerminatedBy::Error,
            error: None,
            lineage: Vec::new(),
        },
        snapshots: vec![MemorySnapshot {
            version: 0,
            step: 0,
            frames: memory.shared_current(),
        }],
        memory,
        backend,
        decoding: cfg.decoding,
    };

    for step in 0..cfg.max_steps {
        let reply = match session.ask() {
            Ok(r) => r,
            Err(e) => return Ok(session.finish(None, TerminatedBy::Error, Some(e))),
        };
        session.trace.turns.push(ChatTurn::assistant(reply.clone()));
        let parsed = parse_response(&reply);
        if parsed.terminate {
            let answer = answer_of(&parsed, &reply);
            session.trace.steps.push(StepRecord {
                step,
                response: reply,
                parsed,
                calls: Vec::new(),
                diagnostic: None,
                memory_version: session.memory.version(),
                forced: false,
            });
            return Ok(session.finish(Some(answer), TerminatedBy::Model, None));
        }

        let mut lines = Vec::new();
        if parsed.diagnostic {
            lines.push(NO_THOUGHT.to_string());
        }
        let mut calls = Vec::new();
        let mut diagnostic = None;
        match parsed.action.as_deref().map(|a| parse_action_with(a, &cfg.toolset)) {
            None => diagnostic = Some(NO_ACTION.to_string()),
            Some(Err(e)) => diagnostic = Some(format!("ACTION rejected: {e}")),
            Some(Ok(parsed_calls)) => {
                for call in parsed_calls {
                    let (ok, observation) = match dispatch(&call, &session.memory, &ctx) {
                        Ok((next, observation)) => {
                            session.memory = next;
                            session.snapshots.push(MemorySnapshot {
                                version: session.memory.version(),
                                step,
                                frames: session.memory.shared_current(),
                            });
                            (true, observation)
                        }
                        Err(e) => (
                            false,
                            format!("{call} failed: {e}; memory unchanged (version {}).", session.memory.version()),
                        ),
                    };
                    lines.push(observation.clone());
                    calls.push(CallRecord { call, ok, observation });
                }
            }
        }
        if let Some(d) = &diagnostic {
            lines.push(d.clone());
        }
        session.trace.turns.push(ChatTurn::observation(step, lines.join("\n")));
        let frames_turn = cfg.template.frames_turn(attachment(&session.memory));
        session.trace.turns.push(frames_turn);
        session.trace.steps.push(StepRecord {
            step,
            response: reply,
            parsed,
            calls,
            diagnostic,
            memory_version: session.memory.version(),
            forced: false,
        });
    }

    let step = cfg.max_steps;
    session
        .trace
        .turns
        .push(ChatTurn::user(cfg.template.force_answer_suffix.trim_end(), None));
    let reply = match session.ask() {
        Ok(r) => r,
        Err(e) => return Ok(session.finish(None, TerminatedBy::Error, Some(e))),
    };
    session.trace.turns.push(ChatTurn::assistant(reply.clone()));
    let parsed = parse_response(&reply);
    let answer = answer_of(&parsed, &reply);
    session.trace.steps.push(StepRecord {
        step,
        response: reply,
        parsed,
        calls: Vec::new(),
        diagnostic: None,
        memory_version: session.memory.version(),
        forced: true,
    });
    Ok(session.finish(Some(answer), TerminatedBy::ForcedAtT, None))
}

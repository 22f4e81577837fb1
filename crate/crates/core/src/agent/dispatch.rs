//! Tool execution against the video memory.

use thiserror::Error;

use super::action::ToolCall;
use crate::backends::EmbeddingProvider;
use crate::frame::FrameSequence;
use crate::ingest::{sample_frames, IngestError, SamplingSpec, VideoSource};
use crate::interval::{Interval, IntervalSet};
use crate::memory::{MemoryError, VideoMemory};
use crate::render::{render_highlights, BarStyle, RenderError};
use crate::retrieve::{retrieve_moments, RetrievalConfig, RetrieveError};

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("cut({start}, {end}) is empty after clamping to the current window {window}")]
    EmptyCut { start: f64, end: f64, window: String },
    #[error("highlight query is empty")]
    EmptyQuery,
    #[error("highlight is unavailable: no embedding provider is configured")]
    NoProvider,
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Retrieve(#[from] RetrieveError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

/// What a tool may touch besides the memory itself.
#[derive(Clone, Copy)]
pub struct ToolContext<'a> {
    pub source: &'a VideoSource,
    pub provider: Option<&'a dyn EmbeddingProvider>,
    pub sampling: &'a SamplingSpec,
    pub retrieval: &'a RetrievalConfig,
    pub style: &'a BarStyle,
}

fn current_highlights(frames: &FrameSequence) -> IntervalSet {
    frames
        .overlay()
        .map(|o| o.highlights.clone())
        .unwrap_or_else(IntervalSet::empty)
}

fn fmt_seconds(x: f64) -> String {
    let s = format!("{x:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Runs one validated call. On success returns the next memory version and
/// an observation for the model; on failure the caller keeps `memory`.
pub fn dispatch(
    call: &ToolCall,
    memory: &VideoMemory,
    ctx: &ToolContext<'_>,
) -> Result<(VideoMemory, String), ToolError> {
    let current = memory.current();
    let window = current.window();
    match call {
        ToolCall::ProgressBar => {
            let frames = render_highlights(current, &current_highlights(current), ctx.style)?;
            let next = memory.update(frames, call.to_string())?;
            let observation = format!(
                "{call}: progress bar drawn on {} frames; memory version {}.",
                next.current().len(),
                next.version()
            );
            Ok((next, observation))
        }
        ToolCall::Highlight { query, k } => {
            if query.trim().is_empty() {
                return Err(ToolError::EmptyQuery);
            }
            let provider = ctx.provider.ok_or(ToolError::NoProvider)?;
            let mut cfg = ctx.retrieval.clone();
            if let Some(k) = k {
                cfg.k = *k;
            }
            let found = retrieve_moments(ctx.source, query, provider, &cfg, ctx.sampling.long_side)?;
            let visible = found.clamp(window.start(), window.end());
            let frames = render_highlights(current, &visible, ctx.style)?;
            let next = memory.update(frames, call.to_string())?;
            let observation = format!(
                "{call}: relevant moments {visible} (seconds), highlighted on the progress bar; memory version {}.",
                next.version()
            );
            Ok((next, observation))
        }
        ToolCall::Cut { start, end } => {
            let a = start.max(window.start());
            let b = end.min(window.end());
            let span = Interval::new(a, b).map_err(|_| ToolError::EmptyCut {
                start: *start,
                end: *end,
                window: window.to_string(),
            })?;
            let mut frames = sample_frames(ctx.source, ctx.sampling, Some(span))?;
            if let Some(overlay) = current.overlay() {
                let kept = overlay.highlights.clamp(a, b);
                frames = render_highlights(&frames, &kept, &overlay.style)?;
            }
            let next = memory.update(frames, call.to_string())?;
            let observation = format!(
                "{call}: memory version {} holds {} frames sampled between {} and {} seconds.",
                next.version(),
                next.current().len(),
                fmt_seconds(a),
                fmt_seconds(b)
            );
            Ok((next, observation))
        }
    }
}

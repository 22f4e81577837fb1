//! Zero-shot moment retrieval by clip/text embedding similarity.
//!
//! Frames sampled at `fps` are grouped into clips of `clip_len` frames; each
//! clip is scored by cosine similarity against the query embedding; the `k`
//! best clips are merged into contiguous time intervals.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{EmbeddingProvider, ProviderError};
use crate::frame::{Frame, FrameSequence};
use crate::ingest::{sample_at_fps, IngestError, VideoSource};
use crate::interval::{Interval, IntervalSet};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum RetrieveError {
    #[error("cannot group clips: no frames")]
    NoFrames,
    #[error("invalid retrieval config: {0}")]
    BadConfig(String),
    #[error("query is empty")]
    EmptyQuery,
    #[error("embedding dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("embedding has zero norm")]
    ZeroNorm,
    #[error("embedding has a non-finite component")]
    NonFinite,
    #[error("clip {0} is scored more than once")]
    DuplicateClip(usize),
    #[error("clip {0} has no score")]
    MissingClip(usize),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    /// Sampling rate in frames per second.
    pub fps: f64,
    pub clip_len: usize,
    pub k: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            fps: 1.0,
            clip_len: 8,
            k: 8,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrieveError> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(RetrieveError::BadConfig(format!("fps must be positive, got {}", self.fps)));
        }
        if self.clip_len < 1 {
            return Err(RetrieveError::BadConfig("clip_len must be at least 1".into()));
        }
        if self.k < 1 {
            return Err(RetrieveError::BadConfig("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// `clip_len` consecutive frames; the last clip of a video may be shorter.
#[derive(Debug, Clone)]
pub struct Clip<'a> {
    pub index: usize,
    pub frames: &'a [Frame],
    pub span: Interval,
}

/// `[clip_len*i/fps, clip_len*(i+1)/fps)` clamped to the duration.
pub fn clip_span<T: Scalar>(index: usize, cfg: &RetrievalConfig, duration: T) -> (T, T) {
    let len = T::of_usize(cfg.clip_len);
    let fps = T::of(cfg.fps);
    let start = T::of_usize(index) * len / fps;
    let end = (T::of_usize(index + 1) * len / fps).min(duration);
    (start.min(duration), end)
}

pub fn group_clips<'a>(frames: &'a FrameSequence, cfg: &RetrievalConfig) -> Result<Vec<Clip<'a>>, RetrieveError> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(RetrieveError::NoFrames);
    }
    let duration = frames.source_duration();
    frames
        .frames()
        .chunks(cfg.clip_len)
        .enumerate()
        .map(|(index, chunk)| {
            let (start, end) = clip_span(index, cfg, duration);
            let span = Interval::new(start, end).map_err(|e| {
                RetrieveError::BadConfig(format!("clip {index} has no extent within the video: {e}"))
            })?;
            Ok(Clip {
                index,
                frames: chunk,
                span,
            })
        })
        .collect()
}

/// Fixed-length embedding vector with finite components and non-zero norm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Embedding<T = f64> {
    values: Vec<T>,
}

impl<T: Scalar> Embedding<T> {
    pub fn new(values: Vec<T>) -> Result<Self, RetrieveError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RetrieveError::NonFinite);
        }
        if values.iter().all(|v| v.is_zero()) {
            return Err(RetrieveError::ZeroNorm);
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
    }

    /// Same direction, every component multiplied by `factor > 0`.
    pub fn scaled(&self, factor: T) -> Result<Self, RetrieveError> {
        Self::new(self.values.iter().map(|&v| v * factor).collect())
    }
}

/// `(a . b) / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity<T: Scalar>(a: &Embedding<T>, b: &Embedding<T>) -> Result<T, RetrieveError> {
    if a.dimension() != b.dimension() {
        return Err(RetrieveError::DimensionMismatch(a.dimension(), b.dimension()));
    }
    let dot = a
        .values
        .iter()
        .zip(&b.values)
        .fold(T::zero(), |acc, (&x, &y)| acc + x * y);
    let denom = a.norm() * b.norm();
    if !(denom > T::zero()) || !denom.is_finite() {
        return Err(RetrieveError::ZeroNorm);
    }
    Ok((dot / denom).max(-T::one()).min(T::one()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClipScore<T = f64> {
    pub clip_index: usize,
    pub similarity: T,
}

/// Indices of the `min(k, N)` best clips, ascending. Ties go to the lower
/// clip index. Scores must cover `0..N` exactly once.
pub fn select_top_k<T: Scalar>(scores: &[ClipScore<T>], k: usize) -> Result<Vec<usize>, RetrieveError> {
    let n = scores.len();
    let mut seen = vec![false; n];
    for s in scores {
        if s.clip_index < n && std::mem::replace(&mut seen[s.clip_index], true) {
            return Err(RetrieveError::DuplicateClip(s.clip_index));
        }
    }
    if let Some(missing) = seen.iter().position(|&x| !x) {
        return Err(RetrieveError::MissingClip(missing));
    }
    let mut order: Vec<&ClipScore<T>> = scores.iter().collect();
    order.sort_by(|a, b| {
        b.similarity
            .partial_cmp(&a.similarity)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.clip_index.cmp(&b.clip_index))
    });
    let mut picked: Vec<usize> = order.iter().take(k.min(n)).map(|s| s.clip_index).collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Top-k clips merged into contiguous intervals (only index-adjacent clips
/// merge), clamped to `[0, duration]`.
pub fn top_k_segments<T: Scalar>(
    scores: &[ClipScore<T>],
    cfg: &RetrievalConfig,
    duration: T,
) -> Result<IntervalSet<T>, RetrieveError> {
    cfg.validate()?;
    if scores.iter().any(|s| !s.similarity.is_finite()) {
        return Err(RetrieveError::NonFinite);
    }
    let picked = select_top_k(scores, cfg.k)?;
    let mut intervals = Vec::new();
    let mut run_start: Option<usize> = None;
    for (pos, &idx) in picked.iter().enumerate() {
        let start = *run_start.get_or_insert(idx);
        let run_ends = picked.get(pos + 1).map_or(true, |&next| next != idx + 1);
        if run_ends {
            let (a, _) = clip_span(start, cfg, duration);
            let (_, b) = clip_span(idx, cfg, duration);
            if let Ok(iv) = Interval::new(a, b) {
                intervals.push(iv);
            }
            run_start = None;
        }
    }
    Ok(IntervalSet::normalize(intervals).clamp(T::zero(), duration))
}

/// Cosine similarity of every clip to the query, in clip order.
pub fn score_clips<P: EmbeddingProvider + ?Sized>(
    provider: &P,
    clips: &[Clip<'_>],
    query: &str,
) -> Result<Vec<ClipScore>, RetrieveError> {
    let query_embedding = provider.embed_text(query)?;
    let mut by_index: HashMap<usize, Embedding> = HashMap::with_capacity(clips.len());
    for (index, e) in provider.embed_clips(clips)? {
        if by_index.insert(index, e).is_some() {
            return Err(ProviderError::for_clip(index, "clip embedded twice").into());
        }
    }
    clips
        .iter()
        .map(|clip| {
            let e = by_index
                .get(&clip.index)
                .ok_or_else(|| ProviderError::for_clip(clip.index, "no embedding returned"))?;
            let similarity = cosine_similarity(e, &query_embedding)
                .map_err(|err| ProviderError::for_clip(clip.index, err.to_string()))?;
            Ok(ClipScore {
                clip_index: clip.index,
                similarity,
            })
        })
        .collect()
}

/// Full pipeline over the whole source video.
pub fn retrieve_moments<P: EmbeddingProvider + ?Sized>(
    source: &VideoSource,
    query: &str,
    provider: &P,
    cfg: &RetrievalConfig,
    long_side: u32,
) -> Result<IntervalSet, RetrieveError> {
    if query.trim().is_empty() {
        return Err(RetrieveError::EmptyQuery);
    }
    cfg.validate()?;
    let frames = sample_at_fps(source, cfg.fps, long_side)?;
    let clips = group_clips(&frames, cfg)?;
    let scores = score_clips(provider, &clips, query)?;
    top_k_segments(&scores, cfg, source.duration())
}

//! Versioned video memory: the frame set a session currently shows the model.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::frame::FrameSequence;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemoryError {
    #[error("cannot update video memory with an empty frame sequence")]
    EmptyFrames,
}

/// One entry of the memory lineage: which call produced which version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineageEntry {
    pub version: u64,
    pub cause: String,
}

/// Immutable snapshot; [`VideoMemory::update`] returns a new value.
#[derive(Debug, Clone)]
pub struct VideoMemory {
    current: Arc<FrameSequence>,
    version: u64,
    lineage: Vec<LineageEntry>,
}

impl VideoMemory {
    pub fn new(initial: FrameSequence) -> Result<Self, MemoryError> {
        if initial.is_empty() {
            return Err(MemoryError::EmptyFrames);
        }
        Ok(Self {
            current: Arc::new(initial),
            version: 0,
            lineage: Vec::new(),
        })
    }

    pub fn update(&self, frames: FrameSequence, cause: impl Into<String>) -> Result<Self, MemoryError> {
        if frames.is_empty() {
            return Err(MemoryError::EmptyFrames);
        }
        let version = self.version + 1;
        let mut lineage = self.lineage.clone();
        lineage.push(LineageEntry {
            version,
            cause: cause.into(),
        });
        Ok(Self {
            current: Arc::new(frames),
            version,
            lineage,
        })
    }

    pub fn current(&self) -> &FrameSequence {
        &self.current
    }

    pub fn shared_current(&self) -> Arc<FrameSequence> {
        Arc::clone(&self.current)
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn lineage(&self) -> &[LineageEntry] {
        &self.lineage
    }
}

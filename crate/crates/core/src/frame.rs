//! Timestamped RGB frames and ordered frame sequences.

use image::RgbImage;
use thiserror::Error;

use crate::interval::{Interval, IntervalSet};
use crate::render::BarStyle;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error("frame raster is {width}x{height}; both sides must be at least 1 px")]
    EmptyRaster { width: u32, height: u32 },
    #[error("timestamp {0} is not a finite non-negative number of seconds")]
    BadTimestamp(f64),
    #[error("source duration {0} must be positive and finite")]
    BadDuration(f64),
    #[error("timestamps must be strictly increasing (frame {index}: {prev} then {next})")]
    NotIncreasing { index: usize, prev: f64, next: f64 },
    #[error("frame {index} at {timestamp}s lies after the source duration {duration}s")]
    PastDuration {
        index: usize,
        timestamp: f64,
        duration: f64,
    },
    #[error("frames in one sequence must share dimensions (frame {index} is {got:?}, expected {expected:?})")]
    MixedDimensions {
        index: usize,
        got: (u32, u32),
        expected: (u32, u32),
    },
}

/// One RGB raster tagged with its original-video timestamp in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pixels: RgbImage,
    timestamp: f64,
}

impl Frame {
    pub fn new(pixels: RgbImage, timestamp: f64) -> Result<Self, FrameError> {
        let (width, height) = pixels.dimensions();
        if width == 0 || height == 0 {
            return Err(FrameError::EmptyRaster { width, height });
        }
        if !timestamp.is_finite() || timestamp < 0.0 {
            return Err(FrameError::BadTimestamp(timestamp));
        }
        Ok(Self { pixels, timestamp })
    }

    pub fn pixels(&self) -> &RgbImage {
        &self.pixels
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }

    pub fn into_pixels(self) -> RgbImage {
        self.pixels
    }
}

/// Progress-bar strip state of an annotated sequence. Rows `[0, base_height)`
/// of every frame are the untouched source raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Overlay {
    pub base_height: u32,
    pub style: BarStyle,
    pub highlights: IntervalSet,
}

/// Ordered frames of one video plus the time window they were sampled from.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Frame>,
    source_duration: f64,
    window: Interval,
    overlay: Option<Overlay>,
}

impl FrameSequence {
    /// Sequence covering the whole source, `[0, source_duration)`.
    pub fn new(frames: Vec<Frame>, source_duration: f64) -> Result<Self, FrameError> {
        let window =
            Interval::new(0.0, source_duration).map_err(|_| FrameError::BadDuration(source_duration))?;
        Self::with_window(frames, source_duration, window)
    }

    pub fn with_window(
        frames: Vec<Frame>,
        source_duration: f64,
        window: Interval,
    ) -> Result<Self, FrameError> {
        if !source_duration.is_finite() || source_duration <= 0.0 {
            return Err(FrameError::BadDuration(source_duration));
        }
        for (index, pair) in frames.windows(2).enumerate() {
            let (prev, next) = (pair[0].timestamp, pair[1].timestamp);
            if next <= prev {
                return Err(FrameError::NotIncreasing {
                    index: index + 1,
                    prev,
                    next,
                });
            }
        }
        if let Some(first) = frames.first() {
            let expected = first.pixels.dimensions();
            for (index, frame) in frames.iter().enumerate() {
                if frame.timestamp > source_duration {
                    return Err(FrameError::PastDuration {
                        index,
                        timestamp: frame.timestamp,
                        duration: source_duration,
                    });
                }
                let got = frame.pixels.dimensions();
                if got != expected {
                    return Err(FrameError::MixedDimensions {
                        index,
                        got,
                        expected,
                    });
                }
            }
        }
        Ok(Self {
            frames,
            source_duration,
            window,
            overlay: None,
        })
    }

    pub(crate) fn with_overlay(mut self, overlay: Overlay) -> Self {
        self.overlay = Some(overlay);
        self
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn source_duration(&self) -> f64 {
        self.source_duration
    }

    /// Time window of the original video these frames were sampled from.
    pub fn window(&self) -> Interval {
        self.window
    }

    pub fn overlay(&self) -> Option<&Overlay> {
        self.overlay.as_ref()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.frames.iter().map(Frame::timestamp).collect()
    }

    /// The frames without any progress-bar strip.
    pub fn base(&self) -> FrameSequence {
        match &self.overlay {
            None => self.clone(),
            Some(overlay) => {
                let frames = self
                    .frames
                    .iter()
                    .map(|f| {
                        let w = f.width();
                        let cropped =
                            image::imageops::crop_imm(&f.pixels, 0, 0, w, overlay.base_height).to_image();
                        Frame {
                            pixels: cropped,
                            timestamp: f.timestamp,
                        }
                    })
                    .collect();
                FrameSequence {
                    frames,
                    source_duration: self.source_duration,
                    window: self.window,
                    overlay: None,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(t: f64) -> Frame {
        Frame::new(RgbImage::new(4, 3), t).unwrap()
    }

    #[test]
    fn rejects_empty_raster() {
        assert!(matches!(
            Frame::new(RgbImage::new(0, 3), 0.0),
            Err(FrameError::EmptyRaster { .. })
        ));
    }

    #[test]
    fn sequence_invariants() {
        assert!(FrameSequence::new(vec![frame(0.5), frame(1.5)], 2.0).is_ok());
        assert!(matches!(
            FrameSequence::new(vec![frame(1.5), frame(1.5)], 2.0),
            Err(FrameError::NotIncreasing { .. })
        ));
        assert!(matches!(
            FrameSequence::new(vec![frame(2.5)], 2.0),
            Err(FrameError::PastDuration { .. })
        ));
        assert!(FrameSequence::new(vec![], 0.0).is_err());
        let odd = Frame::new(RgbImage::new(5, 3), 1.0).unwrap();
        assert!(matches!(
            FrameSequence::new(vec![frame(0.0), odd], 2.0),
            Err(FrameError::MixedDimensions { .. })
        ));
    }
}

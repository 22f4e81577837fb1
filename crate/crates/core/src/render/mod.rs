//! Progress-bar strip compositing and moment highlights.
//!
//! Every output frame is the input frame with a strip appended underneath:
//! rows `[0, H)` are copied verbatim and rows `[H, H + bar_strip_height)` hold
//! the track, the position marker for the frame's timestamp, and second labels.
//! Drawing order inside the strip is fixed: background, track, highlight bands,
//! marker, labels.

pub mod font;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{Frame, FrameError, FrameSequence, Overlay};
use crate::interval::IntervalSet;
use crate::scalar::{round_half_up, Scalar};

pub const MIN_FRAME_WIDTH: u32 = 64;
/// Highlight bands are this many pixels thicker than the track.
pub const HIGHLIGHT_EXTRA: u32 = 6;
const PAD: u32 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error("nothing to render: frame sequence is empty")]
    NoFrames,
    #[error("frame is {0} px wide; labels need at least {MIN_FRAME_WIDTH} px")]
    TooNarrow(u32),
    #[error("invalid bar style: {0}")]
    BadStyle(String),
    #[error("duration must be positive, got {0}")]
    ZeroDuration(f64),
    #[error("timestamp {t} lies outside [0, {duration}]")]
    TimeOutside { t: f64, duration: f64 },
    #[error("highlight [{start}, {end}) lies outside [0, {duration}]")]
    HighlightOutside { start: f64, end: f64, duration: f64 },
    #[error(transparent)]
    Frame(#[from] FrameError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimestampFormat {
    IntegerSeconds,
    OneDecimal,
}

impl TimestampFormat {
    pub fn format(self, t: f64) -> String {
        match self {
            TimestampFormat::IntegerSeconds => format!("{}", round_half_up(t) as i64),
            TimestampFormat::OneDecimal => format!("{t:.1}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarStyle {
    pub bar_strip_height: u32,
    pub track_margin_frac: f64,
    pub track_thickness: u32,
    pub marker_radius: u32,
    pub track_color: [u8; 3],
    pub marker_color: [u8; 3],
    pub highlight_color: [u8; 3],
    pub label_color: [u8; 3],
    pub background_color: [u8; 3],
    pub timestamp_format: TimestampFormat,
}

impl Default for BarStyle {
    fn default() -> Self {
        Self {
            bar_strip_height: 60,
            track_margin_frac: 0.05,
            track_thickness: 8,
            marker_radius: 7,
            track_color: [200, 200, 200],
            marker_color: [230, 60, 60],
            highlight_color: [60, 200, 90],
            label_color: [255, 255, 255],
            background_color: [0, 0, 0],
            timestamp_format: TimestampFormat::IntegerSeconds,
        }
    }
}

impl BarStyle {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.highlight_color == self.track_color {
            return Err(RenderError::BadStyle(
                "highlight_color must differ from track_color".into(),
            ));
        }
        if self.marker_color == self.track_color {
            return Err(RenderError::BadStyle(
                "marker_color must differ from track_color".into(),
            ));
        }
        if self.track_thickness == 0 {
            return Err(RenderError::BadStyle("track_thickness must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.track_margin_frac) {
            return Err(RenderError::BadStyle(format!(
                "track_margin_frac must be in [0, 0.5), got {}",
                self.track_margin_frac
            )));
        }
        let needed = self.track_thickness + 2 * self.marker_radius + font::TEXT_HEIGHT;
        if self.bar_strip_height < needed {
            return Err(RenderError::BadStyle(format!(
                "bar_strip_height {} is below track + marker + label height {needed}",
                self.bar_strip_height
            )));
        }
        Ok(())
    }

    /// Half-extent of the tallest element drawn around the track row.
    fn track_extent(&self) -> u32 {
        self.marker_radius
            .max((self.track_thickness + HIGHLIGHT_EXTRA) / 2)
            .max(self.track_thickness / 2)
    }
}

/// Pixel layout of the strip for a given frame size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BarGeometry {
    pub track_x0: u32,
    pub track_x1: u32,
    pub track_y: u32,
    pub strip_y0: u32,
}

impl BarGeometry {
    pub fn new(width: u32, height: u32, style: &BarStyle) -> Result<Self, RenderError> {
        if width < MIN_FRAME_WIDTH {
            return Err(RenderError::TooNarrow(width));
        }
        let x0 = round_half_up(style.track_margin_frac * width as f64) as u32;
        let x1 = (width - x0).min(width - 1);
        if x0 >= x1 {
            return Err(RenderError::BadStyle("track has no width".into()));
        }
        Ok(Self {
            track_x0: x0,
            track_x1: x1,
            track_y: height + PAD + font::TEXT_HEIGHT + PAD + style.track_extent(),
            strip_y0: height,
        })
    }
}

/// Column of the marker for time `t`, rounded half-up.
pub fn marker_x<T: Scalar>(t: T, duration: T, geom: &BarGeometry) -> Result<u32, RenderError> {
    if !(duration > T::zero()) {
        return Err(RenderError::ZeroDuration(duration.as_f64()));
    }
    if t < T::zero() || t > duration || !t.is_finite() {
        return Err(RenderError::TimeOutside {
            t: t.as_f64(),
            duration: duration.as_f64(),
        });
    }
    let x0 = T::of(geom.track_x0 as f64);
    let span = T::of((geom.track_x1 - geom.track_x0) as f64);
    let x = round_half_up(x0 + t / duration * span).as_f64() as u32;
    Ok(x.clamp(geom.track_x0, geom.track_x1))
}

/// Inclusive column range tinted for each highlight interval.
pub fn highlight_columns(
    moments: &IntervalSet,
    duration: f64,
    geom: &BarGeometry,
) -> Result<Vec<(u32, u32)>, RenderError> {
    moments
        .iter()
        .map(|iv| {
            if iv.end() > duration {
                return Err(RenderError::HighlightOutside {
                    start: iv.start(),
                    end: iv.end(),
                    duration,
                });
            }
            Ok((marker_x(iv.start(), duration, geom)?, marker_x(iv.end(), duration, geom)?))
        })
        .collect()
}

fn fill_rect(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, color: Rgb<u8>, clip: (u32, u32)) {
    let (w, _) = img.dimensions();
    let xs = x0.max(0)..x1.min(w as i64);
    let ys = y0.max(clip.0 as i64)..y1.min(clip.1 as i64);
    for y in ys {
        for x in xs.clone() {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

fn fill_circle(img: &mut RgbImage, cx: i64, cy: i64, r: i64, color: Rgb<u8>, clip: (u32, u32)) {
    let (w, _) = img.dimensions();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy > r * r {
                continue;
            }
            let (x, y) = (cx + dx, cy + dy);
            if x >= 0 && x < w as i64 && y >= clip.0 as i64 && y < clip.1 as i64 {
                img.put_pixel(x as u32, y as u32, color);
            }
        }
    }
}

/// Left edge for text of width `tw` centered on `cx`, kept inside the frame.
fn centered_left(cx: u32, tw: u32, width: u32) -> i64 {
    let left = cx as i64 - (tw / 2) as i64;
    left.clamp(0, (width as i64 - tw as i64).max(0))
}

/// Draws the strip into rows `[geom.strip_y0, geom.strip_y0 + bar_strip_height)`
/// of `canvas`.
fn draw_strip(
    canvas: &mut RgbImage,
    geom: &BarGeometry,
    style: &BarStyle,
    t: f64,
    duration: f64,
    bands: &[(u32, u32)],
) -> Result<(), RenderError> {
    let width = canvas.width();
    let clip = (geom.strip_y0, geom.strip_y0 + style.bar_strip_height);
    let (x0, x1) = (geom.track_x0 as i64, geom.track_x1 as i64);
    let ty = geom.track_y as i64;

    fill_rect(canvas, 0, clip.0 as i64, width as i64, clip.1 as i64, Rgb(style.background_color), clip);

    let half = (style.track_thickness / 2) as i64;
    fill_rect(canvas, x0, ty - half, x1 + 1, ty - half + style.track_thickness as i64, Rgb(style.track_color), clip);

    let band = style.track_thickness + HIGHLIGHT_EXTRA;
    let band_half = (band / 2) as i64;
    for &(a, b) in bands {
        fill_rect(canvas, a as i64, ty - band_half, b as i64 + 1, ty - band_half + band as i64, Rgb(style.highlight_color), clip);
    }

    let mx = marker_x(t, duration, geom)?;
    fill_circle(canvas, mx as i64, ty, style.marker_radius as i64, Rgb(style.marker_color), clip);

    let label = Rgb(style.label_color);
    let current = style.timestamp_format.format(t);
    let cw = font::text_width(&current);
    let top = (geom.strip_y0 + PAD) as i64;
    font::draw_text(canvas, &current, centered_left(mx, cw, width), top, label, clip.0, clip.1);

    let bottom = ty + style.track_extent() as i64 + 3;
    let zero = "0";
    font::draw_text(canvas, zero, centered_left(geom.track_x0, font::text_width(zero), width), bottom, label, clip.0, clip.1);
    let end = style.timestamp_format.format(duration);
    font::draw_text(canvas, &end, centered_left(geom.track_x1, font::text_width(&end), width), bottom, label, clip.0, clip.1);
    Ok(())
}

/// Strip image alone (`width x bar_strip_height`), for debugging dumps.
pub fn render_strip(
    width: u32,
    t: f64,
    duration: f64,
    style: &BarStyle,
    moments: &IntervalSet,
) -> Result<RgbImage, RenderError> {
    style.validate()?;
    let geom = BarGeometry::new(width, 0, style)?;
    let bands = highlight_columns(moments, duration, &geom)?;
    let mut strip = RgbImage::new(width, style.bar_strip_height);
    draw_strip(&mut strip, &geom, style, t, duration, &bands)?;
    Ok(strip)
}

fn compose(frame: &Frame, style: &BarStyle, duration: f64, moments: &IntervalSet) -> Result<Frame, RenderError> {
    let src = frame.pixels();
    let (w, h) = src.dimensions();
    let geom = BarGeometry::new(w, h, style)?;
    let bands = highlight_columns(moments, duration, &geom)?;
    let mut out = RgbImage::new(w, h + style.bar_strip_height);
    image::imageops::replace(&mut out, src, 0, 0);
    draw_strip(&mut out, &geom, style, frame.timestamp(), duration, &bands)?;
    Ok(Frame::new(out, frame.timestamp())?)
}

/// Appends a progress-bar strip under every frame. Frames that already carry
/// a strip are re-rendered from their base raster.
pub fn render_progress_bar(frames: &FrameSequence, style: &BarStyle) -> Result<FrameSequence, RenderError> {
    render_highlights(frames, &IntervalSet::empty(), style)
}

/// Progress bar with the given moments tinted on the track. Accepts raw or
/// already annotated frames; any previous highlights are replaced.
pub fn render_highlights(
    frames: &FrameSequence,
    moments: &IntervalSet,
    style: &BarStyle,
) -> Result<FrameSequence, RenderError> {
    if frames.is_empty() {
        return Err(RenderError::NoFrames);
    }
    style.validate()?;
    let base = frames.base();
    let duration = base.source_duration();
    if let Some(last) = moments.intervals().last() {
        if last.end() > duration {
            return Err(RenderError::HighlightOutside {
                start: last.start(),
                end: last.end(),
                duration,
            });
        }
    }
    let rendered = base
        .frames()
        .iter()
        .map(|f| compose(f, style, duration, moments))
        .collect::<Result<Vec<_>, _>>()?;
    let base_height = base.frames()[0].height();
    Ok(FrameSequence::with_window(rendered, duration, base.window())?.with_overlay(Overlay {
        base_height,
        style: style.clone(),
        highlights: moments.clone(),
    }))
}

/// All frames of a sequence tiled row-major on one canvas, `columns` wide
/// (about square when `None`), separated by `gap` background pixels.
pub fn contact_sheet(frames: &FrameSequence, columns: Option<u32>, gap: u32) -> Result<RgbImage, RenderError> {
    let first = frames.frames().first().ok_or(RenderError::NoFrames)?;
    let n = frames.len() as u32;
    let cols = columns
        .unwrap_or_else(|| (n as f64).sqrt().ceil() as u32)
        .clamp(1, n);
    let rows = n.div_ceil(cols);
    let (w, h) = (first.width(), first.height());
    let mut sheet = RgbImage::new(cols * w + (cols - 1) * gap, rows * h + (rows - 1) * gap);
    for (i, frame) in frames.frames().iter().enumerate() {
        let (c, r) = (i as u32 % cols, i as u32 / cols);
        image::imageops::replace(&mut sheet, frame.pixels(), (c * (w + gap)) as i64, (r * (h + gap)) as i64);
    }
    Ok(sheet)
}

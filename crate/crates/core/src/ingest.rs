//! Turning a video source into uniformly sampled, resized frames.
//!
//! Two source kinds are supported. A frame directory holds
//! `frame_<milliseconds, 9 digits>.png` files plus a `manifest.json` of the form
//! `{"duration_s": number, "fps": number}`. A video file is decoded by an
//! external executable driven by a [`DecoderConfig`] argument template.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, Mutex, OnceLock};

use image::imageops::FilterType;
use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{Frame, FrameError, FrameSequence};
use crate::interval::Interval;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_N_FRAMES: usize = 32;
pub const DEFAULT_LONG_SIDE: u32 = 480;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read video source {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },
    #[error("invalid manifest {path}: {reason}")]
    BadManifest { path: PathBuf, reason: String },
    #[error("frame directory {0} contains no frame_<ms>.png files")]
    NoFrameFiles(PathBuf),
    #[error("window {window} is not inside the source duration [0, {duration})")]
    WindowOutside { window: String, duration: f64 },
    #[error("invalid sampling parameters: {0}")]
    BadSpec(String),
    #[error("no frames to sample: duration {duration}s at {fps} fps")]
    NoFrames { duration: f64, fps: f64 },
    #[error("decoder `{program}` failed ({status}): {stderr}")]
    Decoder {
        program: String,
        status: String,
        stderr: String,
    },
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Number of frames and output resolution for uniform sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub n_frames: usize,
    pub long_side: u32,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self {
            n_frames: DEFAULT_N_FRAMES,
            long_side: DEFAULT_LONG_SIDE,
        }
    }
}

impl SamplingSpec {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.n_frames < 1 {
            return Err(IngestError::BadSpec("n_frames must be at least 1".into()));
        }
        if self.long_side < 16 {
            return Err(IngestError::BadSpec(format!(
                "long_side must be at least 16 px, got {}",
                self.long_side
            )));
        }
        Ok(())
    }
}

/// Argument templates for the external decoder. Placeholders: `{input}`,
/// `{time}` (seconds, three decimals) and `{output}` (PNG path to write).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub extract: Vec<String>,
    /// Must print the duration in seconds on stdout.
    pub probe: Vec<String>,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        let split = |s: &str| s.split_whitespace().map(String::from).collect();
        Self {
            extract: split("ffmpeg -v error -ss {time} -i {input} -frames:v 1 -y {output}"),
            probe: split("ffprobe -v error -show_entries format=duration -of csv=p=0 {input}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub duration_s: f64,
    pub fps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceKind {
    FrameDirectory,
    VideoFile(DecoderConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoSource {
    kind: SourceKind,
    path: PathBuf,
    duration: f64,
}

impl VideoSource {
    /// Opens a frame directory, or probes a video file with the decoder.
    pub fn open(path: impl AsRef<Path>, decoder: &DecoderConfig) -> Result<Self, IngestError> {
        let path = path.as_ref();
        if path.is_dir() {
            Self::frame_directory(path)
        } else {
            Self::video_file(path, decoder.clone())
        }
    }

    pub fn frame_directory(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref().to_path_buf();
        let manifest_path = path.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| IngestError::Unreadable {
            path: manifest_path.clone(),
            reason: e.to_string(),
        })?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| IngestError::BadManifest {
                path: manifest_path.clone(),
                reason: e.to_string(),
            })?;
        if !(manifest.duration_s.is_finite() && manifest.duration_s > 0.0) {
            return Err(IngestError::BadManifest {
                path: manifest_path,
                reason: format!("duration_s must be positive, got {}", manifest.duration_s),
            });
        }
        Ok(Self {
            kind: SourceKind::FrameDirectory,
            path,
            duration: manifest.duration_s,
        })
    }

    pub fn video_file(path: impl AsRef<Path>, decoder: DecoderConfig) -> Result<Self, IngestError> {
        let path = path.as_ref().to_path_buf();
        if !path.is_file() {
            return Err(IngestError::Unreadable {
                path,
                reason: "not a file or frame directory".into(),
            });
        }
        let stdout = run_decoder(&decoder.probe, &path, None, None)?;
        let duration: f64 = stdout.trim().parse().map_err(|_| IngestError::Decoder {
            program: decoder.probe.first().cloned().unwrap_or_default(),
            status: "success".into(),
            stderr: format!("probe printed {:?}, expected a duration in seconds", stdout.trim()),
        })?;
        if !(duration.is_finite() && duration > 0.0) {
            return Err(IngestError::Unreadable {
                path,
                reason: format!("probed duration {duration} is not positive"),
            });
        }
        Ok(Self {
            kind: SourceKind::VideoFile(decoder),
            path,
            duration,
        })
    }

    pub fn kind(&self) -> &SourceKind {
        &self.kind
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// Short identifier derived from the path, used for output naming.
    pub fn video_id(&self) -> String {
        self.path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "video".into())
    }

    fn grab(&self, timestamps: &[f64]) -> Result<Vec<RgbImage>, IngestError> {
        match &self.kind {
            SourceKind::FrameDirectory => {
                let index = frame_index(&self.path)?;
                timestamps
                    .iter()
                    .map(|&t| load_png(&index[nearest_earlier(&index, t)].1))
                    .collect()
            }
            SourceKind::VideoFile(decoder) => {
                let lock = decode_lock(&self.path);
                let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
                let scratch = tempfile::tempdir().map_err(|e| IngestError::Unreadable {
                    path: self.path.clone(),
                    reason: format!("cannot create scratch directory: {e}"),
                })?;
                timestamps
                    .iter()
                    .enumerate()
                    .map(|(j, &t)| {
                        let out = scratch.path().join(format!("f{j:05}.png"));
                        run_decoder(&decoder.extract, &self.path, Some(t), Some(&out))?;
                        load_png(&out)
                    })
                    .collect()
            }
        }
    }
}

/// Center-of-bin timestamps: `w0 + (j + 0.5) * len / n`.
pub fn uniform_timestamps(window: Interval, n: usize) -> Vec<f64> {
    let step = window.length() / n as f64;
    (0..n)
        .map(|j| window.start() + (j as f64 + 0.5) * step)
        .collect()
}

/// `n_frames` frames uniformly covering `window` (the whole video by default).
pub fn sample_frames(
    source: &VideoSource,
    spec: &SamplingSpec,
    window: Option<Interval>,
) -> Result<FrameSequence, IngestError> {
    spec.validate()?;
    let duration = source.duration;
    let window = match window {
        Some(w) => {
            if w.end() > duration + TIME_EPS {
                return Err(IngestError::WindowOutside {
                    window: w.to_string(),
                    duration,
                });
            }
            w
        }
        None => Interval::new(0.0, duration).map_err(|_| FrameError::BadDuration(duration))?,
    };
    let timestamps = uniform_timestamps(window, spec.n_frames);
    let rasters = source.grab(&timestamps)?;
    let frames = rasters
        .into_iter()
        .zip(&timestamps)
        .map(|(img, &t)| Frame::new(resize_long_side(&img, spec.long_side), t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FrameSequence::with_window(frames, duration, window)?)
}

/// Frames at `j / fps` for `j = 0 .. floor(duration * fps) - 1`.
pub fn sample_at_fps(
    source: &VideoSource,
    fps: f64,
    long_side: u32,
) -> Result<FrameSequence, IngestError> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(IngestError::BadSpec(format!("fps must be positive, got {fps}")));
    }
    SamplingSpec {
        n_frames: 1,
        long_side,
    }
    .validate()?;
    let count = (source.duration * fps + TIME_EPS).floor() as usize;
    if count == 0 {
        return Err(IngestError::NoFrames {
            duration: source.duration,
            fps,
        });
    }
    let timestamps: Vec<f64> = (0..count).map(|j| j as f64 / fps).collect();
    let rasters = source.grab(&timestamps)?;
    let frames = rasters
        .into_iter()
        .zip(&timestamps)
        .map(|(img, &t)| Frame::new(resize_long_side(&img, long_side), t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FrameSequence::new(frames, source.duration)?)
}

/// Output size with the longer side set to `long_side`; the short side is
/// rounded half-up and never drops below 1 px.
pub fn scaled_dimensions(width: u32, height: u32, long_side: u32) -> (u32, u32) {
    let scale = |short: u32, long: u32| {
        let (s, l, target) = (short as u64, long as u64, long_side as u64);
        (((2 * s * target + l) / (2 * l)).max(1)) as u32
    };
    if width >= height {
        (long_side, scale(height, width))
    } else {
        (scale(width, height), long_side)
    }
}

pub fn resize_long_side(img: &RgbImage, long_side: u32) -> RgbImage {
    let (w, h) = img.dimensions();
    let (nw, nh) = scaled_dimensions(w, h, long_side);
    if (nw, nh) == (w, h) {
        img.clone()
    } else {
        image::imageops::resize(img, nw, nh, FilterType::Triangle)
    }
}

/// Parses `frame_000012500.png` into 12.5 seconds.
pub fn parse_frame_file_name(name: &str) -> Option<f64> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".png")?;
    if digits.len() != 9 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse::<u64>().ok().map(|ms| ms as f64 / 1000.0)
}

pub fn frame_file_name(timestamp_s: f64) -> String {
    format!("frame_{:09}.png", (timestamp_s * 1000.0).round() as u64)
}

fn frame_index(dir: &Path) -> Result<Vec<(f64, PathBuf)>, IngestError> {
    let entries = std::fs::read_dir(dir).map_err(|e| IngestError::Unreadable {
        path: dir.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut index: Vec<(f64, PathBuf)> = entries
        .filter_map(Result::ok)
        .filter_map(|entry| {
            let name = entry.file_name();
            parse_frame_file_name(name.to_str()?).map(|t| (t, entry.path()))
        })
        .collect();
    if index.is_empty() {
        return Err(IngestError::NoFrameFiles(dir.to_path_buf()));
    }
    index.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(index)
}

/// Index of the latest frame at or before `t`; the first frame when `t`
/// precedes every available frame.
fn nearest_earlier(index: &[(f64, PathBuf)], t: f64) -> usize {
    index
        .partition_point(|(ts, _)| *ts <= t + TIME_EPS)
        .saturating_sub(1)
}

fn load_png(path: &Path) -> Result<RgbImage, IngestError> {
    image::open(path)
        .map(|img| img.to_rgb8())
        .map_err(|e| IngestError::Unreadable {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
}

fn decode_lock(path: &Path) -> Arc<Mutex<()>> {
    static LOCKS: OnceLock<Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>> = OnceLock::new();
    let mut locks = LOCKS
        .get_or_init(Default::default)
        .lock()
        .unwrap_or_else(|p| p.into_inner());
    Arc::clone(locks.entry(path.to_path_buf()).or_default())
}

fn run_decoder(
    template: &[String],
    input: &Path,
    time: Option<f64>,
    output: Option<&Path>,
) -> Result<String, IngestError> {
    let (program, args) = template.split_first().ok_or_else(|| IngestError::Decoder {
        program: String::new(),
        status: "not run".into(),
        stderr: "decoder command template is empty".into(),
    })?;
    let fill = |arg: &String| {
        let mut arg = arg.replace("{input}", &input.to_string_lossy());
        if let Some(t) = time {
            arg = arg.replace("{time}", &format!("{t:.3}"));
        }
        if let Some(out) = output {
            arg = arg.replace("{output}", &out.to_string_lossy());
        }
        arg
    };
    let result = Command::new(program)
        .args(args.iter().map(fill))
        .output()
        .map_err(|e| IngestError::Decoder {
            program: program.clone(),
            status: "spawn failed".into(),
            stderr: e.to_string(),
        })?;
    if !result.status.success() {
        return Err(IngestError::Decoder {
            program: program.clone(),
            status: result.status.to_string(),
            stderr: String::from_utf8_lossy(&result.stderr).trim().to_string(),
        });
    }
    if let Some(out) = output {
        if !out.is_file() {
            return Err(IngestError::Decoder {
                program: program.clone(),
                status: result.status.to_string(),
                stderr: format!("decoder did not write {}", out.display()),
            });
        }
    }
    Ok(String::from_utf8_lossy(&result.stdout).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamps_whole_video() {
        let ts = uniform_timestamps(Interval::new(0.0, 32.0).unwrap(), 32);
        let expected: Vec<f64> = (0..32).map(|j| j as f64 + 0.5).collect();
        assert_eq!(ts, expected);
    }

    #[test]
    fn timestamps_in_window() {
        let ts = uniform_timestamps(Interval::new(10.0, 60.0).unwrap(), 4);
        assert_eq!(ts, vec![16.25, 28.75, 41.25, 53.75]);
    }

    #[test]
    fn aspect_arithmetic() {
        assert_eq!(scaled_dimensions(1920, 1080, 480), (480, 270));
        assert_eq!(scaled_dimensions(1080, 1920, 480), (270, 480));
        assert_eq!(scaled_dimensions(640, 480, 480), (480, 360));
        // 100 * 480 / 333 = 144.14..
        assert_eq!(scaled_dimensions(333, 100, 480), (480, 144));
        // 3 * 16 / 32 = 1.5 rounds up to 2
        assert_eq!(scaled_dimensions(32, 3, 16), (16, 2));
        assert_eq!(scaled_dimensions(4000, 1, 16), (16, 1));
    }

    #[test]
    fn frame_names() {
        assert_eq!(parse_frame_file_name("frame_000012500.png"), Some(12.5));
        assert_eq!(parse_frame_file_name("frame_12500.png"), None);
        assert_eq!(parse_frame_file_name("frame_00001250x.png"), None);
        assert_eq!(frame_file_name(12.5), "frame_000012500.png");
    }

    #[test]
    fn nearest_earlier_rule() {
        let index: Vec<(f64, PathBuf)> =
            [0.0, 1.0, 2.0].iter().map(|&t| (t, PathBuf::new())).collect();
        assert_eq!(nearest_earlier(&index, 1.5), 1);
        assert_eq!(nearest_earlier(&index, 1.0), 1);
        assert_eq!(nearest_earlier(&index, 0.999_999_999_9), 1);
        assert_eq!(nearest_earlier(&index, 7.0), 2);
        assert_eq!(nearest_earlier(&[(0.5, PathBuf::new())], 0.1), 0);
    }

    #[test]
    fn spec_validation() {
        assert!(SamplingSpec::default().validate().is_ok());
        assert!(SamplingSpec { n_frames: 0, long_side: 480 }.validate().is_err());
        assert!(SamplingSpec { n_frames: 1, long_side: 15 }.validate().is_err());
    }
}

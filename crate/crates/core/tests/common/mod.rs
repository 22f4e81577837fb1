//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use proptest::prelude::*;
use tempfile::TempDir;
use timebar_core::agent::{AgentConfig, SessionOutcome, TerminatedBy, ToolCall};
use timebar_core::backends::{BackendRequest, Role, ScriptedBackend, ScriptedReply};
use timebar_core::eval::extract_intervals;
use timebar_core::frame::{Frame, FrameSequence};
use timebar_core::ingest::{uniform_timestamps, SamplingSpec, VideoSource};
use timebar_core::interval::{Interval, IntervalSet};
use timebar_core::render::{
    highlight_columns, marker_x, render_highlights, render_progress_bar, BarGeometry, BarStyle, TimestampFormat,
};
use timebar_core::synthetic::{fixture_frame, write_fixture_video, FixtureSpec, PlantedMoment};

pub fn moment(token: &str, start: f64, end: f64) -> PlantedMoment {
    PlantedMoment {
        token: token.into(),
        span: Interval::new(start, end).unwrap(),
    }
}

pub fn write_fixture(spec: &FixtureSpec) -> (TempDir, VideoSource) {
    let dir = tempfile::tempdir().unwrap();
    let path = write_fixture_video(&dir.path().join("fixture"), spec).unwrap();
    let source = VideoSource::frame_directory(&path).unwrap();
    (dir, source)
}

/// 80 s at 1 fps with "cat" visible during [16, 40).
pub fn cat_fixture() -> (TempDir, VideoSource, FixtureSpec) {
    let spec = FixtureSpec::new(80.0, vec![moment("cat", 16.0, 40.0)]);
    let (dir, source) = write_fixture(&spec);
    (dir, source, spec)
}

pub fn reply(thought: &str, action: &str) -> String {
    format!("THOUGHT: {thought}\nACTION:\n```\n{action}\n```")
}

pub fn final_reply(thought: &str, answer: &str) -> String {
    format!("THOUGHT: {thought}\nANSWER: {answer}\nTERMINATE")
}

/// Observation text of the latest tool turn in a request.
pub fn last_observation(req: &BackendRequest) -> Option<&str> {
    req.turns
        .iter()
        .rev()
        .find(|t| t.role == Role::ToolObservation)
        .map(|t| t.text.as_str())
}

/// A model stand-in that highlights `token` and then answers with the
/// moments reported in the observation.
pub fn grounding_script(token: &str, k: usize) -> ScriptedBackend {
    let first = reply("find the moments", &format!("highlight(\"{token}\", k={k})"));
    let answer = ScriptedReply::reactive(|req: &BackendRequest| {
        let obs = last_observation(req).unwrap_or_default();
        let set = obs
            .find("[[")
            .and_then(|a| obs[a..].find("]]").map(|b| &obs[a..a + b + 2]))
            .map(extract_intervals)
            .unwrap_or_default();
        final_reply("read the highlighted track", &set.to_string())
    });
    ScriptedBackend::new(vec![ScriptedReply::Text(first), answer])
}

pub fn scratch() -> TempDir {
    tempfile::tempdir().unwrap()
}

pub fn exists(p: &Path) -> bool {
    p.exists()
}

// Oracles

/// Union measure and intersection measure of two interval lists by an event
/// sweep over all endpoints.
pub fn sweep_iou(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut events: Vec<(f64, i32, i32)> = Vec::new();
    for &(s, e) in a {
        if s < e {
            events.push((s, 1, 0));
            events.push((e, -1, 0));
        }
    }
    for &(s, e) in b {
        if s < e {
            events.push((s, 0, 1));
            events.push((e, 0, -1));
        }
    }
    events.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let (mut ca, mut cb) = (0, 0);
    let (mut inter, mut union) = (0.0, 0.0);
    let mut prev = f64::NEG_INFINITY;
    for (x, da, db) in events {
        if prev.is_finite() {
            let len = x - prev;
            if ca > 0 && cb > 0 {
                inter += len;
            }
            if ca > 0 || cb > 0 {
                union += len;
            }
        }
        ca += da;
        cb += db;
        prev = x;
    }
    if union == 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Measure of the union of an interval list, by sorting and scanning.
pub fn sweep_measure(a: &[(f64, f64)]) -> f64 {
    let mut v: Vec<(f64, f64)> = a.iter().copied().filter(|(s, e)| s < e).collect();
    v.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (s, e) in v {
        cur = match cur {
            Some((cs, ce)) if s <= ce => Some((cs, ce.max(e))),
            Some((cs, ce)) => {
                total += ce - cs;
                Some((s, e))
            }
            None => Some((s, e)),
        };
    }
    total + cur.map_or(0.0, |(s, e)| e - s)
}

/// Sort all scores, keep k, then merge runs of consecutive indices into
/// spans of `clip_len / fps` seconds clipped to `duration`.
pub fn topk_oracle(sims: &[f64], k: usize, clip_len: usize, fps: f64, duration: f64) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..sims.len()).collect();
    order.sort_by(|&i, &j| sims[j].partial_cmp(&sims[i]).unwrap().then(i.cmp(&j)));
    let mut chosen: Vec<usize> = order.into_iter().take(k).collect();
    chosen.sort_unstable();
    let span = clip_len as f64 / fps;
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut run: Option<(usize, usize)> = None;
    for i in chosen {
        run = match run {
            Some((a, b)) if i == b + 1 => Some((a, i)),
            Some((a, b)) => {
                out.push((a as f64 * span, ((b + 1) as f64 * span).min(duration)));
                Some((i, i))
            }
            None => Some((i, i)),
        };
    }
    if let Some((a, b)) = run {
        out.push((a as f64 * span, ((b + 1) as f64 * span).min(duration)));
    }
    out
}

/// IoU counted over 1 ms cells covering [0, duration].
pub fn raster_iou(a: &[(f64, f64)], b: &[(f64, f64)], duration: f64) -> f64 {
    let cells = (duration * 1000.0).ceil() as usize;
    let mut in_a = vec![false; cells];
    let mut in_b = vec![false; cells];
    let mark = |v: &mut Vec<bool>, set: &[(f64, f64)]| {
        for &(s, e) in set {
            let lo = (s * 1000.0).round() as usize;
            let hi = ((e * 1000.0).round() as usize).min(cells);
            for c in v.iter_mut().take(hi).skip(lo) {
                *c = true;
            }
        }
    };
    mark(&mut in_a, a);
    mark(&mut in_b, b);
    let inter = in_a.iter().zip(&in_b).filter(|(x, y)| **x && **y).count();
    let union = in_a.iter().zip(&in_b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

// Fuzzing helpers for the agent loop

pub fn small_config() -> AgentConfig {
    AgentConfig {
        sampling: SamplingSpec {
            n_frames: 4,
            long_side: 64,
        },
        ..AgentConfig::default()
    }
}

pub fn action_line() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("progress_bar()".to_string()),
        Just("highlight(\"cat\", k=2)".to_string()),
        Just("highlight(\"unicorn\")".to_string()),
        (0u32..20, 0u32..20).prop_map(|(a, b)| format!("cut({a}, {b})")),
        Just("cut(1,".to_string()),
        "[a-z_()\", =0-9]{0,20}",
    ]
}

pub fn scripted_reply() -> impl Strategy<Value = String> {
    prop_oneof![
        prop::collection::vec(action_line(), 1..4).prop_map(|lines| reply("t", &lines.join("\n"))),
        Just(final_reply("t", "done")),
        Just("THOUGHT: only thinking".to_string()),
        ".{0,60}",
    ]
}

/// Structural checks on a finished session driven by `n_replies` scripted
/// replies.
pub fn check_outcome(outcome: &SessionOutcome, n_replies: usize, cfg: &AgentConfig) -> Result<(), String> {
    let trace = &outcome.trace;
    if trace.steps.len() > cfg.max_steps + 1 {
        return Err(format!("{} steps for T = {}", trace.steps.len(), cfg.max_steps));
    }
    match trace.terminated_by {
        TerminatedBy::Error if n_replies >= cfg.max_steps + 1 => {
            return Err("error termination with enough replies".into())
        }
        TerminatedBy::Error => {}
        _ if outcome.answer.is_none() => return Err("terminated without an answer".into()),
        _ => {}
    }
    let forced = trace.steps.iter().filter(|s| s.forced).count();
    if forced > 1 || (forced == 1 && !trace.steps.last().is_some_and(|s| s.forced)) {
        return Err("forced step is not last".into());
    }
    let mut before = 0;
    for step in &trace.steps {
        let ok = step.calls.iter().filter(|c| c.ok).count() as u64;
        if step.memory_version != before + ok {
            return Err(format!("step {} reports version {}, expected {}", step.step, step.memory_version, before + ok));
        }
        before = step.memory_version;
    }
    let versions: Vec<u64> = trace.lineage.iter().map(|e| e.version).collect();
    if versions != (1..=before).collect::<Vec<_>>() {
        return Err(format!("lineage versions {versions:?}"));
    }
    serde_json::from_str::<serde_json::Value>(&trace.to_json()).map_err(|e| e.to_string())?;
    Ok(())
}

// Renderer fixtures and checks

pub fn golden_dir(manifest_dir: &str) -> PathBuf {
    Path::new(manifest_dir).join("tests/golden")
}

/// Fixed 4-frame clip: 8 s of the synthetic fixture with "cat" at [2, 5).
pub fn golden_fixture() -> FrameSequence {
    let spec = FixtureSpec::new(8.0, vec![moment("cat", 2.0, 5.0)]);
    let window = Interval::new(0.0, 8.0).unwrap();
    let frames = uniform_timestamps(window, 4)
        .into_iter()
        .map(|t| Frame::new(fixture_frame(&spec, t), t).unwrap())
        .collect();
    FrameSequence::new(frames, 8.0).unwrap()
}

/// Compares decoded pixels with a stored PNG; `UPDATE_GOLDENS=1` rewrites it.
pub fn check_golden(dir: &Path, name: &str, img: &RgbImage) -> Result<(), String> {
    let path = dir.join(name);
    if std::env::var_os("UPDATE_GOLDENS").is_some() {
        std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
        return img.save(&path).map_err(|e| e.to_string());
    }
    let expected = image::open(&path)
        .map_err(|e| format!("{}: {e}; run with UPDATE_GOLDENS=1 to create it", path.display()))?
        .into_rgb8();
    if expected.dimensions() != img.dimensions() || expected.as_raw() != img.as_raw() {
        return Err(format!("{name} differs from the golden raster"));
    }
    Ok(())
}

pub fn bar_style() -> impl Strategy<Value = BarStyle> {
    (
        (0u32..40, 0.0f64..0.2, 1u32..12, 0u32..10),
        (any::<[u8; 3]>(), any::<[u8; 3]>(), any::<[u8; 3]>(), any::<[u8; 3]>()),
        any::<bool>(),
    )
        .prop_map(|((extra, margin, thickness, radius), (track, marker, label, background), decimal)| {
            let mut s = BarStyle {
                bar_strip_height: thickness + 2 * radius + 14 + extra,
                track_margin_frac: margin,
                track_thickness: thickness,
                marker_radius: radius,
                track_color: track,
                marker_color: marker,
                highlight_color: [0, 0, 0],
                label_color: label,
                background_color: background,
                timestamp_format: if decimal {
                    TimestampFormat::OneDecimal
                } else {
                    TimestampFormat::IntegerSeconds
                },
            };
            // a tint used by nothing else, so tinted pixels are recognizable
            let used = [s.track_color, s.marker_color, s.label_color, s.background_color];
            s.highlight_color = (0u8..=255).map(|g| [7, g, 201]).find(|c| !used.contains(c)).unwrap();
            s
        })
}

/// Up to four frames of a patterned raster at sorted random timestamps.
pub fn clip() -> impl Strategy<Value = FrameSequence> {
    (64u32..200, 16u32..80, 1.0f64..500.0, 1usize..5, any::<u8>()).prop_flat_map(|(w, h, duration, n, seed)| {
        prop::collection::vec(0.0..=duration, n).prop_map(move |mut ts| {
            ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ts.dedup();
            let frames = ts
                .iter()
                .map(|&t| Frame::new(RgbImage::from_fn(w, h, |x, y| Rgb([x as u8 ^ seed, y as u8, seed])), t).unwrap())
                .collect();
            FrameSequence::new(frames, duration).unwrap()
        })
    })
}

/// Height additivity, frame purity, marker endpoints and monotonicity, and
/// tint confined to the computed highlight columns.
pub fn check_render_invariants(frames: &FrameSequence, style: &BarStyle, moments: &IntervalSet) -> Result<(), String> {
    let duration = frames.source_duration();
    let plain = render_progress_bar(frames, style).map_err(|e| e.to_string())?;
    let lit = render_highlights(frames, moments, style).map_err(|e| e.to_string())?;
    let (w, h) = (frames.frames()[0].width(), frames.frames()[0].height());
    let geom = BarGeometry::new(w, h, style).map_err(|e| e.to_string())?;
    let bands = highlight_columns(moments, duration, &geom).map_err(|e| e.to_string())?;
    let mut last_marker = 0;
    let top = (w * h * 3) as usize;
    for ((input, p), l) in frames.frames().iter().zip(plain.frames()).zip(lit.frames()) {
        if p.height() != h + style.bar_strip_height || p.width() != w || l.height() != p.height() {
            return Err(format!("output is {}x{}, input {w}x{h}", p.width(), p.height()));
        }
        if p.pixels().as_raw()[..top] != input.pixels().as_raw()[..] || l.pixels().as_raw()[..top] != input.pixels().as_raw()[..] {
            return Err("frame region changed".into());
        }
        for (x, y, px) in l.pixels().enumerate_pixels() {
            if px != p.pixels().get_pixel(x, y) {
                if !bands.iter().any(|&(a, b)| (a..=b).contains(&x)) {
                    return Err(format!("tint outside the bands at ({x}, {y})"));
                }
                if px.0 != style.highlight_color {
                    return Err(format!("unexpected color {:?} at ({x}, {y})", px.0));
                }
            }
        }
        let mx = marker_x(input.timestamp(), duration, &geom).map_err(|e| e.to_string())?;
        if mx < last_marker {
            return Err("marker moved backwards".into());
        }
        last_marker = mx;
    }
    let x0 = marker_x(0.0, duration, &geom).map_err(|e| e.to_string())?;
    let x1 = marker_x(duration, duration, &geom).map_err(|e| e.to_string())?;
    if (x0, x1) != (geom.track_x0, geom.track_x1) {
        return Err(format!("endpoints map to {x0} and {x1}"));
    }
    Ok(())
}

// Action language

pub fn tool_call() -> impl Strategy<Value = ToolCall> {
    let query = "([^\\p{C}]|[\"\\\\\n\t]){0,24}";
    prop_oneof![
        Just(ToolCall::ProgressBar),
        (query, prop::option::of(1usize..5000)).prop_map(|(query, k)| ToolCall::Highlight { query, k }),
        (0.0f64..1e5, 0.0f64..1e5).prop_map(|(start, end)| ToolCall::Cut { start, end }),
        (0u32..5000, 0u32..5000).prop_map(|(a, b)| ToolCall::Cut { start: a as f64, end: b as f64 }),
    ]
}

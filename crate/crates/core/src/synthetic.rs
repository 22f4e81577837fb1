//! Fixture videos with planted tokens and a constructive embedding provider
//! over them.
//!
//! Every fixture frame reserves a top-left block whose pixels encode a token:
//! red holds the 1-based vocabulary id (0 for none) and green the activation
//! strength (255 for full). The provider reads only the top-left
//! [`TOKEN_BLOCK`]x[`TOKEN_BLOCK`] pixels, so its output is exact even after
//! resampling, as long as the planted block is larger than that.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::backends::{EmbeddingProvider, ProviderError};
use crate::frame::Frame;
use crate::ingest::{frame_file_name, Manifest, MANIFEST_FILE};
use crate::interval::{Interval, IntervalSet};
use crate::retrieve::{Clip, Embedding};

pub const VOCABULARY: [&str; 8] = ["cat", "dog", "ball", "car", "door", "bird", "person", "tree"];
/// Side of the block the provider reads.
pub const TOKEN_BLOCK: u32 = 4;
/// Side of the block fixtures paint, larger than `TOKEN_BLOCK` so resizing
/// keeps the read block exact.
pub const PLANTED_BLOCK: u32 = 12;
pub const EPSILON: f64 = 0.001;

pub fn token_id(name: &str) -> Option<usize> {
    VOCABULARY.iter().position(|&t| t == name)
}

fn fnv1a(bytes: impl IntoIterator<Item = u8>, seed: u64) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325_u64 ^ seed.wrapping_mul(0x0000_0100_0000_01b3);
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Mean activation per vocabulary token over the reserved blocks of `frames`.
pub fn token_activations(frames: &[Frame]) -> Vec<f64> {
    let mut totals = vec![0.0; VOCABULARY.len()];
    let mut cells = 0usize;
    for frame in frames {
        let img = frame.pixels();
        for y in 0..TOKEN_BLOCK.min(img.height()) {
            for x in 0..TOKEN_BLOCK.min(img.width()) {
                let [r, g, _] = img.get_pixel(x, y).0;
                if (1..=VOCABULARY.len()).contains(&(r as usize)) {
                    totals[r as usize - 1] += g as f64 / 255.0;
                }
                cells += 1;
            }
        }
    }
    if cells > 0 {
        for t in &mut totals {
            *t /= cells as f64;
        }
    }
    totals
}

/// Vocabulary-sized embedding plus one trailing background component.
///
/// Clip component `v` is the mean activation of token `v`; the background
/// component is one minus the total activation. Every component gets a
/// hash-derived perturbation in `[EPSILON/2, EPSILON)`. A query for token `v`
/// is the unit basis vector `e_v`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticEmbedder;

impl SyntheticEmbedder {
    pub fn embed_frames(&self, frames: &[Frame]) -> Embedding {
        let activations = token_activations(frames);
        let background = (1.0 - activations.iter().sum::<f64>()).max(0.0);
        let block_bytes: Vec<u8> = frames
            .iter()
            .flat_map(|f| {
                let img = f.pixels();
                (0..TOKEN_BLOCK.min(img.height()))
                    .flat_map(move |y| (0..TOKEN_BLOCK.min(img.width())).map(move |x| (x, y)))
                    .flat_map(move |(x, y)| img.get_pixel(x, y).0)
            })
            .collect();
        let values = activations
            .into_iter()
            .chain(std::iter::once(background))
            .enumerate()
            .map(|(d, v)| {
                let u = (fnv1a(block_bytes.iter().copied(), d as u64) >> 11) as f64 / (1u64 << 53) as f64;
                v + EPSILON * (0.5 + 0.5 * u)
            })
            .collect();
        Embedding::new(values).expect("perturbation keeps every component positive")
    }
}

impl EmbeddingProvider for SyntheticEmbedder {
    fn dimension(&self) -> usize {
        VOCABULARY.len() + 1
    }

    fn embed_clips(&self, clips: &[Clip<'_>]) -> Result<Vec<(usize, Embedding)>, ProviderError> {
        Ok(clips
            .iter()
            .map(|clip| {
                if clip.frames.is_empty() {
                    return Err(ProviderError::for_clip(clip.index, "clip has no frames"));
                }
                Ok((clip.index, self.embed_frames(clip.frames)))
            })
            .collect::<Result<_, _>>()?)
    }

    fn embed_text(&self, query: &str) -> Result<Embedding, ProviderError> {
        let id = token_id(query.trim()).ok_or_else(|| {
            ProviderError::new(format!("unknown token {query:?}; vocabulary is {}", VOCABULARY.join(", ")))
        })?;
        let mut values = vec![0.0; self.dimension()];
        values[id] = 1.0;
        Ok(Embedding::new(values).expect("basis vector"))
    }
}

/// A token visible during `span`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedMoment {
    pub token: String,
    pub span: Interval,
}

#[derive(Debug, Clone)]
pub struct FixtureSpec {
    pub duration_s: f64,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub moments: Vec<PlantedMoment>,
}

impl FixtureSpec {
    pub fn new(duration_s: f64, moments: Vec<PlantedMoment>) -> Self {
        Self {
            duration_s,
            fps: 1.0,
            width: 160,
            height: 90,
            moments,
        }
    }

    /// Ground truth for one token.
    pub fn ground_truth(&self, token: &str) -> IntervalSet {
        IntervalSet::normalize(self.moments.iter().filter(|m| m.token == token).map(|m| m.span))
    }
}

/// Raster of the fixture at time `t`: a smooth gradient with the token block
/// painted when a planted moment covers `t`.
pub fn fixture_frame(spec: &FixtureSpec, t: f64) -> RgbImage {
    let (w, h) = (spec.width, spec.height);
    let phase = ((t * 7.0) as u32 % 256) as u8;
    let mut img = RgbImage::from_fn(w, h, |x, y| {
        Rgb([
            (x * 255 / w.max(1)) as u8,
            (y * 255 / h.max(1)) as u8,
            phase,
        ])
    });
    let token = spec
        .moments
        .iter()
        .find(|m| m.span.contains(t))
        .and_then(|m| token_id(&m.token));
    let pixel = match token {
        Some(id) => Rgb([id as u8 + 1, 255, 0]),
        None => Rgb([0, 0, 0]),
    };
    for y in 0..PLANTED_BLOCK.min(h) {
        for x in 0..PLANTED_BLOCK.min(w) {
            img.put_pixel(x, y, pixel);
        }
    }
    img
}

/// Writes a frame directory (`manifest.json` plus `frame_<ms>.png` at
/// `j / fps`) and returns its path.
pub fn write_fixture_video(dir: &Path, spec: &FixtureSpec) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let manifest = Manifest {
        duration_s: spec.duration_s,
        fps: spec.fps,
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec(&manifest)?)?;
    let count = (spec.duration_s * spec.fps + 1e-9).floor() as usize;
    for j in 0..count {
        let t = j as f64 / spec.fps;
        fixture_frame(spec, t)
            .save(dir.join(frame_file_name(t)))
            .map_err(std::io::Error::other)?;
    }
    Ok(dir.to_path_buf())
}

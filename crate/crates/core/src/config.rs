//! Effective configuration: defaults, a `key = value` file, then overrides.
//! Lines starting with `#` are comments.
//!
//! ```text
//! # retrieval
//! k = 4
//! track_color = 200,200,200
//! tools = progress_bar,highlight
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

use crate::agent::{AgentConfig, PromptTemplate, ToolName, Toolset, DEFAULT_MAX_STEPS};
use crate::backends::http::HttpSettings;
use crate::backends::Decoding;
use crate::ingest::{DecoderConfig, SamplingSpec};
use crate::render::{BarStyle, TimestampFormat};
use crate::retrieve::RetrievalConfig;

pub const KEYS: [&str; 31] = [
    "backend",
    "endpoint",
    "model",
    "api_key_env",
    "timeout_s",
    "retries",
    "provider",
    "provider_endpoint",
    "provider_model",
    "max_steps",
    "n_frames",
    "long_side",
    "tools",
    "fps",
    "clip_len",
    "k",
    "temperature",
    "max_tokens",
    "bar_strip_height",
    "track_margin_frac",
    "track_thickness",
    "marker_radius",
    "track_color",
    "marker_color",
    "highlight_color",
    "label_color",
    "background_color",
    "timestamp_format",
    "decoder_extract",
    "decoder_probe",
    "prompt_dir",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{origin}: unknown key `{key}`{}", suggestion_text(.suggestion))]
    UnknownKey {
        origin: String,
        key: String,
        suggestion: Option<String>,
    },
    #[error("{origin}: bad value {value:?} for `{key}`: {message}")]
    BadValue {
        origin: String,
        key: String,
        value: String,
        message: String,
    },
    #[error("{origin}: expected `key = value`, got {line:?}")]
    Syntax { origin: String, line: String },
    #[error("cannot read config {path}: {message}")]
    Unreadable { path: String, message: String },
}

fn suggestion_text(s: &Option<String>) -> String {
    s.as_ref().map(|k| format!("; did you mean `{k}`?")).unwrap_or_default()
}

/// Nearest known key by edit distance; ties prefer a key contained in the
/// input, then the shorter key.
pub fn suggest_key(input: &str) -> Option<String> {
    KEYS.iter()
        .map(|k| {
            let contained = input.contains(k);
            (strsim::levenshtein(input, k), !contained, k.len(), *k)
        })
        .min()
        .filter(|(d, contained_not, _, _)| *d <= input.len().max(3) / 2 + 1 || !contained_not)
        .map(|(.., k)| k.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendChoice {
    Http,
    /// Replies replayed from a JSON array of strings.
    Scripted(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderChoice {
    Synthetic,
    Http,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub backend: BackendChoice,
    pub chat: HttpSettings,
    pub provider: ProviderChoice,
    pub embedding: HttpSettings,
    pub max_steps: usize,
    pub sampling: SamplingSpec,
    pub toolset: Toolset,
    pub retrieval: RetrievalConfig,
    pub decoding: Decoding,
    pub style: BarStyle,
    pub decoder: DecoderConfig,
    /// Prompt template directory; the built-in set when unset.
    pub prompt_dir: Option<String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            backend: BackendChoice::Http,
            chat: HttpSettings::default(),
            provider: ProviderChoice::Synthetic,
            embedding: HttpSettings {
                endpoint: "http://127.0.0.1:8001/v1/embed".into(),
                model: "clip-vit-b-32".into(),
                ..HttpSettings::default()
            },
            max_steps: DEFAULT_MAX_STEPS,
            sampling: SamplingSpec::default(),
            toolset: Toolset::default(),
            retrieval: RetrievalConfig::default(),
            decoding: Decoding::default(),
            style: BarStyle::default(),
            decoder: DecoderConfig::default(),
            prompt_dir: None,
        }
    }
}

fn parse_color(s: &str) -> Result<[u8; 3], String> {
    if let Some(hex) = s.strip_prefix('#') {
        if hex.len() == 6 {
            if let Ok(v) = u32::from_str_radix(hex, 16) {
                return Ok([(v >> 16) as u8, (v >> 8) as u8, v as u8]);
            }
        }
        return Err("expected #rrggbb".into());
    }
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts[..] {
        [r, g, b] => {
            let c = |p: &str| u8::from_str(p).map_err(|_| format!("channel {p:?} is not 0..255"));
            Ok([c(r)?, c(g)?, c(b)?])
        }
        _ => Err("expected r,g,b or #rrggbb".into()),
    }
}

fn format_color(c: [u8; 3]) -> String {
    format!("{},{},{}", c[0], c[1], c[2])
}

fn parse_toolset(s: &str) -> Result<Toolset, String> {
    let tools = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| ToolName::from_str(t).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    if tools.is_empty() {
        return Err("at least one tool must be enabled".into());
    }
    Ok(Toolset::new(tools))
}

fn template_words(s: &str) -> Result<Vec<String>, String> {
    let words: Vec<String> = s.split_whitespace().map(String::from).collect();
    if words.is_empty() {
        return Err("command template is empty".into());
    }
    Ok(words)
}

fn positive<T: FromStr + PartialOrd + Default>(s: &str) -> Result<T, String> {
    match T::from_str(s) {
        Ok(v) if v > T::default() => Ok(v),
        _ => Err("expected a positive number".into()),
    }
}

fn number<T: FromStr>(s: &str) -> Result<T, String> {
    T::from_str(s).map_err(|_| "expected a number".into())
}

fn optional(s: &str) -> Option<String> {
    (!s.is_empty() && s != "none").then(|| s.to_string())
}

impl Config {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str, origin: &str) -> Result<(), ConfigError> {
        let bad = |message: String| ConfigError::BadValue {
            origin: origin.into(),
            key: key.into(),
            value: value.into(),
            message,
        };
        let v = value.trim();
        match key {
            "backend" => {
                self.backend = match v {
                    "http" => BackendChoice::Http,
                    _ => match v.strip_prefix("scripted:") {
                        Some(file) if !file.is_empty() => BackendChoice::Scripted(file.into()),
                        _ => return Err(bad("expected `http` or `scripted:FILE`".into())),
                    },
                }
            }
            "endpoint" => self.chat.endpoint = v.into(),
            "model" => self.chat.model = v.into(),
            "api_key_env" => self.chat.api_key_env = optional(v),
            "timeout_s" => {
                let secs: f64 = positive(v).map_err(bad)?;
                self.chat.timeout = Duration::from_secs_f64(secs);
                self.embedding.timeout = self.chat.timeout;
            }
            "retries" => {
                self.chat.retries = number(v).map_err(bad)?;
                self.embedding.retries = self.chat.retries;
            }
            "provider" => {
                self.provider = match v {
                    "synthetic" => ProviderChoice::Synthetic,
                    "http" => ProviderChoice::Http,
                    "none" => ProviderChoice::None,
                    _ => return Err(bad("expected synthetic, http or none".into())),
                }
            }
            "provider_endpoint" => self.embedding.endpoint = v.into(),
            "provider_model" => self.embedding.model = v.into(),
            "max_steps" => self.max_steps = positive(v).map_err(bad)?,
            "n_frames" => self.sampling.n_frames = positive(v).map_err(bad)?,
            "long_side" => self.sampling.long_side = number(v).map_err(bad)?,
            "tools" => self.toolset = parse_toolset(v).map_err(bad)?,
            "fps" => self.retrieval.fps = positive(v).map_err(bad)?,
            "clip_len" => self.retrieval.clip_len = positive(v).map_err(bad)?,
            "k" => self.retrieval.k = positive(v).map_err(bad)?,
            "temperature" => {
                let t: f64 = number(v).map_err(bad)?;
                if !(0.0..=2.0).contains(&t) {
                    return Err(bad("expected a value in [0, 2]".into()));
                }
                self.decoding.temperature = t;
            }
            "max_tokens" => self.decoding.max_tokens = positive(v).map_err(bad)?,
            "bar_strip_height" => self.style.bar_strip_height = positive(v).map_err(bad)?,
            "track_margin_frac" => self.style.track_margin_frac = number(v).map_err(bad)?,
            "track_thickness" => self.style.track_thickness = positive(v).map_err(bad)?,
            "marker_radius" => self.style.marker_radius = number(v).map_err(bad)?,
            "track_color" => self.style.track_color = parse_color(v).map_err(bad)?,
            "marker_color" => self.style.marker_color = parse_color(v).map_err(bad)?,
            "highlight_color" => self.style.highlight_color = parse_color(v).map_err(bad)?,
            "label_color" => self.style.label_color = parse_color(v).map_err(bad)?,
            "background_color" => self.style.background_color = parse_color(v).map_err(bad)?,
            "timestamp_format" => {
                self.style.timestamp_format = match v {
                    "integer-seconds" => TimestampFormat::IntegerSeconds,
                    "one-decimal" => TimestampFormat::OneDecimal,
                    _ => return Err(bad("expected integer-seconds or one-decimal".into())),
                }
            }
            "decoder_extract" => self.decoder.extract = template_words(v).map_err(bad)?,
            "decoder_probe" => self.decoder.probe = template_words(v).map_err(bad)?,
            "prompt_dir" => self.prompt_dir = optional(v),
            _ => {
                return Err(ConfigError::UnknownKey {
                    origin: origin.into(),
                    key: key.into(),
                    suggestion: suggest_key(key),
                })
            }
        }
        Ok(())
    }

    /// Applies a file's contents; `origin` names it in errors.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let here = format!("{origin}:{}", n + 1);
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                origin: here.clone(),
                line: raw.to_string(),
            })?;
            self.set(key.trim(), value.trim(), &here)?;
        }
        Ok(())
    }

    /// Effective config with precedence override > file > default.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            config.apply_text(&text, &path.display().to_string())?;
        }
        for (key, value) in overrides {
            config.set(key, value, "command line")?;
        }
        Ok(config)
    }

    /// Every key with its effective value; [`Config::from_pairs`] inverts it.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let s = &self.style;
        let values: [(&str, String); 31] = [
            (
                "backend",
                match &self.backend {
                    BackendChoice::Http => "http".into(),
                    BackendChoice::Scripted(f) => format!("scripted:{f}"),
                },
            ),
            ("endpoint", self.chat.endpoint.clone()),
            ("model", self.chat.model.clone()),
            ("api_key_env", self.chat.api_key_env.clone().unwrap_or_else(|| "none".into())),
            ("timeout_s", self.chat.timeout.as_secs_f64().to_string()),
            ("retries", self.chat.retries.to_string()),
            (
                "provider",
                match self.provider {
                    ProviderChoice::Synthetic => "synthetic",
                    ProviderChoice::Http => "http",
                    ProviderChoice::None => "none",
                }
                .into(),
            ),
            ("provider_endpoint", self.embedding.endpoint.clone()),
            ("provider_model", self.embedding.model.clone()),
            ("max_steps", self.max_steps.to_string()),
            ("n_frames", self.sampling.n_frames.to_string()),
            ("long_side", self.sampling.long_side.to_string()),
            ("tools", self.toolset.to_string()),
            ("fps", self.retrieval.fps.to_string()),
            ("clip_len", self.retrieval.clip_len.to_string()),
            ("k", self.retrieval.k.to_string()),
            ("temperature", self.decoding.temperature.to_string()),
            ("max_tokens", self.decoding.max_tokens.to_string()),
            ("bar_strip_height", s.bar_strip_height.to_string()),
            ("track_margin_frac", s.track_margin_frac.to_string()),
            ("track_thickness", s.track_thickness.to_string()),
            ("marker_radius", s.marker_radius.to_string()),
            ("track_color", format_color(s.track_color)),
            ("marker_color", format_color(s.marker_color)),
            ("highlight_color", format_color(s.highlight_color)),
            ("label_color", format_color(s.label_color)),
            ("background_color", format_color(s.background_color)),
            (
                "timestamp_format",
                match s.timestamp_format {
                    TimestampFormat::IntegerSeconds => "integer-seconds",
                    TimestampFormat::OneDecimal => "one-decimal",
                }
                .into(),
            ),
            ("decoder_extract", self.decoder.extract.join(" ")),
            ("decoder_probe", self.decoder.probe.join(" ")),
            ("prompt_dir", self.prompt_dir.clone().unwrap_or_else(|| "none".into())),
        ];
        values.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        for (k, v) in pairs {
            config.set(k, v, "embedded config")?;
        }
        Ok(config)
    }

    pub fn prompt_template(&self) -> Result<PromptTemplate, crate::agent::AgentError> {
        match &self.prompt_dir {
            Some(dir) => PromptTemplate::load_dir(Path::new(dir)),
            None => Ok(PromptTemplate::builtin()),
        }
    }

    pub fn agent_config(&self) -> Result<AgentConfig, crate::agent::AgentError> {
        let cfg = AgentConfig {
            max_steps: self.max_steps,
            sampling: self.sampling,
            toolset: self.toolset.clone(),
            retrieval: self.retrieval,
            style: self.style.clone(),
            decoding: self.decoding,
            template: self.prompt_template()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

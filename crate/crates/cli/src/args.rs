use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};

/// Video question answering and temporal grounding with a tool-using
/// multimodal model.
#[derive(Debug, Parser)]
#[command(name = "timebar", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by every subcommand. Flags override the config file,
/// which overrides the built-in defaults.
#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Config file of `key = value` lines, or a trace JSON whose embedded
    /// config is reused.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Set any config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Chat backend: `http` or `scripted:FILE` (JSON array of replies).
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// Embedding provider for highlight and retrieve: synthetic, http or none.
    #[arg(long, global = true)]
    pub provider: Option<String>,
    /// Chat completions endpoint URL.
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// Model name sent to the chat endpoint.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Tool-bearing reasoning steps before the answer is forced.
    #[arg(long, global = true)]
    pub max_steps: Option<usize>,
    /// Frames sampled for the model's view.
    #[arg(long, global = true)]
    pub n_frames: Option<usize>,
    /// Long side of sampled frames in pixels.
    #[arg(long, global = true)]
    pub long_side: Option<u32>,
    /// Comma-separated enabled tools.
    #[arg(long, global = true)]
    pub tools: Option<String>,
    /// Retrieval sampling rate in frames per second.
    #[arg(long, global = true)]
    pub fps: Option<f64>,
    /// Frames per retrieval clip.
    #[arg(long, global = true)]
    pub clip_len: Option<usize>,
    /// Clips kept by retrieval.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Sampling temperature.
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

impl GlobalArgs {
    /// Flags as config overrides, in the order they apply.
    pub fn overrides(&self) -> Result<Vec<(String, String)>, String> {
        let mut out = Vec::new();
        for item in &self.set {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| format!("--set expects KEY=VALUE, got {item:?}"))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        let flags: [(&str, Option<String>); 12] = [
            ("backend", self.backend.clone()),
            ("provider", self.provider.clone()),
            ("endpoint", self.endpoint.clone()),
            ("model", self.model.clone()),
            ("max_steps", self.max_steps.map(|v| v.to_string())),
            ("n_frames", self.n_frames.map(|v| v.to_string())),
            ("long_side", self.long_side.map(|v| v.to_string())),
            ("tools", self.tools.clone()),
            ("fps", self.fps.map(|v| v.to_string())),
            ("clip_len", self.clip_len.map(|v| v.to_string())),
            ("k", self.k.map(|v| v.to_string())),
            ("temperature", self.temperature.map(|v| v.to_string())),
        ];
        out.extend(flags.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
        Ok(out)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Answer a question about a video.
    Ask(AskArgs),
    /// Localize the moments matching a text query.
    Ground(GroundArgs),
    /// Top-k clip retrieval for a query, without the chat model.
    Retrieve(RetrieveArgs),
    /// Write sampled frames with the progress bar and optional highlights.
    Render(RenderArgs),
    /// Score a dataset from a predictions file or by running the agent.
    Eval(EvalArgs),
    /// Regenerate the command-line reference.
    #[command(hide = true)]
    GenDocs {
        #[arg(long, default_value = "docs/cli.md")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct SessionOutput {
    /// Write the session trace as JSON.
    #[arg(long, value_name = "PATH")]
    pub emit_trace: Option<PathBuf>,
    /// Dump every memory version as `<video_id>/v<version>_<step>.png`.
    #[arg(long, value_name = "DIR")]
    pub emit_frames: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AskArgs {
    /// Frame directory or video file.
    #[arg(long)]
    pub video: PathBuf,
    #[arg(long)]
    pub question: String,
    #[command(flatten)]
    pub output: SessionOutput,
}

#[derive(Debug, Args)]
pub struct GroundArgs {
    /// Frame directory or video file.
    #[arg(long)]
    pub video: PathBuf,
    /// Event to localize.
    #[arg(long)]
    pub query: String,
    #[command(flatten)]
    pub output: SessionOutput,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    /// Frame directory or video file.
    #[arg(long)]
    pub video: PathBuf,
    #[arg(long)]
    pub query: String,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Frame directory or video file.
    #[arg(long)]
    pub video: PathBuf,
    /// Output directory for `frame_<ms>.png` files.
    #[arg(long)]
    pub out: PathBuf,
    /// Moments to highlight, as `[[start,end],...]` in seconds.
    #[arg(long)]
    pub highlights: Option<String>,
    /// Also write the bare strip at this path.
    #[arg(long, value_name = "PATH")]
    pub strip: Option<PathBuf>,
    /// Marker time for `--strip`, in seconds.
    #[arg(long, default_value_t = 0.0)]
    pub at: f64,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["predictions", "run_agent"])))]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// charades-lines or jsonl.
    #[arg(long, default_value = "jsonl")]
    pub format: String,
    /// JSON object mapping item ids to answer text or `[[start,end],...]`.
    #[arg(long, value_name = "PATH")]
    pub predictions: Option<PathBuf>,
    /// Run a session per item instead of reading predictions.
    #[arg(long)]
    pub run_agent: bool,
    /// Write the report JSON here instead of stdout.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
    /// Write question, reference and prediction per QA item as JSONL for an
    /// external judge.
    #[arg(long, value_name = "PATH")]
    pub emit_judge_file: Option<PathBuf>,
    /// Sessions run in parallel with --run-agent.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Directory holding `<video_id>` frame directories or video files.
    #[arg(long, value_name = "DIR")]
    pub video_root: Option<PathBuf>,
    /// Write one trace per item as `<id>.json` with --run-agent.
    #[arg(long, value_name = "DIR")]
    pub emit_traces: Option<PathBuf>,
}

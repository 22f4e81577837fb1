use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::CommandFactory;
use rayon::prelude::*;
use serde_json::json;

use timebar_core::agent::{run_session, AgentConfig, SessionOutcome};
use timebar_core::backends::{ChatBackend, EmbeddingProvider, HttpChatBackend, HttpEmbeddingProvider, ScriptedBackend};
use timebar_core::config::{BackendChoice, Config, ProviderChoice};
use timebar_core::eval::{
    evaluate_grounding, evaluate_qa, extract_intervals, import_dataset, parse_predictions, write_judge_file, Dataset,
    DatasetFormat,
};
use timebar_core::ingest::{frame_file_name, sample_at_fps, sample_frames, VideoSource};
use timebar_core::interval::IntervalSet;
use timebar_core::render::{contact_sheet, render_highlights, render_strip};
use timebar_core::retrieve::{group_clips, score_clips, top_k_segments};
use timebar_core::synthetic::SyntheticEmbedder;

use crate::args::{AskArgs, Cli, Command, EvalArgs, GlobalArgs, GroundArgs, RenderArgs, RetrieveArgs, SessionOutput};
use crate::docs;

/// Failure split by exit status.
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let config = load_config(&cli.global)?;
    match cli.command {
        Command::Ask(args) => ask(&config, args),
        Command::Ground(args) => ground(&config, args),
        Command::Retrieve(args) => retrieve(&config, args),
        Command::Render(args) => render(&config, args),
        Command::Eval(args) => eval(&config, args),
        Command::GenDocs { out } => {
            write_file(&out, docs::markdown(&mut Cli::command()).as_bytes())?;
            Ok(())
        }
    }
}

fn load_config(global: &GlobalArgs) -> Result<Config, Failure> {
    let overrides = global.overrides().map_err(|e| usage(anyhow!(e)))?;
    match &global.config {
        Some(path) if path.extension().is_some_and(|e| e == "json") => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let trace: serde_json::Value =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let pairs: BTreeMap<String, String> = serde_json::from_value(trace["config"].clone())
                .map_err(|e| usage(anyhow!("{}: no embedded config object: {e}", path.display())))?;
            let mut config = Config::from_pairs(&pairs).map_err(usage)?;
            for (k, v) in &overrides {
                config.set(k, v, "command line").map_err(usage)?;
            }
            Ok(config)
        }
        path => Config::load(path.as_deref(), &overrides).map_err(usage),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json value serializes"));
}

fn open_video(config: &Config, path: &Path) -> anyhow::Result<VideoSource> {
    VideoSource::open(path, &config.decoder).with_context(|| format!("opening {}", path.display()))
}

fn make_backend(config: &Config) -> anyhow::Result<Arc<dyn ChatBackend>> {
    Ok(match &config.backend {
        BackendChoice::Http => Arc::new(HttpChatBackend::new(config.chat.clone())?),
        BackendChoice::Scripted(file) => {
            let text = fs::read_to_string(file).with_context(|| format!("reading script {file}"))?;
            Arc::new(ScriptedBackend::from_json(&text).with_context(|| format!("parsing script {file}"))?)
        }
    })
}

fn make_provider(config: &Config) -> anyhow::Result<Option<Arc<dyn EmbeddingProvider>>> {
    Ok(match config.provider {
        ProviderChoice::Synthetic => Some(Arc::new(SyntheticEmbedder)),
        ProviderChoice::Http => Some(Arc::new(HttpEmbeddingProvider::connect(config.embedding.clone())?)),
        ProviderChoice::None => None,
    })
}

struct Runner {
    config: Config,
    agent: AgentConfig,
    backend: Arc<dyn ChatBackend>,
    provider: Option<Arc<dyn EmbeddingProvider>>,
}

impl Runner {
    fn new(config: &Config) -> Result<Self, Failure> {
        Ok(Self {
            agent: config.agent_config().map_err(usage)?,
            backend: make_backend(config)?,
            provider: make_provider(config)?,
            config: config.clone(),
        })
    }

    fn session(&self, video: &Path, question: &str) -> anyhow::Result<SessionOutcome> {
        let source = open_video(&self.config, video)?;
        let mut outcome = run_session(
            &source,
            question,
            self.backend.as_ref(),
            self.provider.as_deref(),
            &self.agent,
        )?;
        outcome.trace.config = self.config.to_pairs();
        Ok(outcome)
    }
}

fn emit(outcome: &SessionOutcome, output: &SessionOutput) -> anyhow::Result<()> {
    if let Some(path) = &output.emit_trace {
        write_file(path, outcome.trace.to_json().as_bytes())?;
    }
    if let Some(dir) = &output.emit_frames {
        dump_frames(outcome, dir)?;
    }
    Ok(())
}

/// One contact sheet per memory version.
fn dump_frames(outcome: &SessionOutcome, dir: &Path) -> anyhow::Result<()> {
    let video_dir = dir.join(&outcome.trace.video_id);
    fs::create_dir_all(&video_dir).with_context(|| format!("creating {}", video_dir.display()))?;
    for snap in &outcome.snapshots {
        let path = video_dir.join(format!("v{}_{}.png", snap.version, snap.step));
        contact_sheet(&snap.frames, None, 4)?
            .save(&path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn session_summary(outcome: &SessionOutcome) -> serde_json::Value {
    json!({
        "video_id": outcome.trace.video_id,
        "answer": outcome.answer,
        "terminated_by": outcome.trace.terminated_by,
        "steps": outcome.trace.steps.len(),
        "memory_version": outcome.trace.lineage.last().map_or(0, |e| e.version),
        "error": outcome.trace.error,
    })
}

fn ask(config: &Config, args: AskArgs) -> Result<(), Failure> {
    let runner = Runner::new(config)?;
    let outcome = runner.session(&args.video, &args.question)?;
    emit(&outcome, &args.output)?;
    print_json(&session_summary(&outcome));
    if let Some(e) = &outcome.trace.error {
        return Err(anyhow!("session ended early: {e}").into());
    }
    Ok(())
}

fn ground(config: &Config, args: GroundArgs) -> Result<(), Failure> {
    let runner = Runner::new(config)?;
    let question = runner.agent.template.grounding_text(&args.query);
    let outcome = runner.session(&args.video, &question)?;
    emit(&outcome, &args.output)?;
    let mut summary = session_summary(&outcome);
    let intervals = extract_intervals(outcome.answer.as_deref().unwrap_or_default());
    summary["intervals"] = serde_json::to_value(&intervals).expect("interval set serializes");
    print_json(&summary);
    if let Some(e) = &outcome.trace.error {
        return Err(anyhow!("session ended early: {e}").into());
    }
    Ok(())
}

fn retrieve(config: &Config, args: RetrieveArgs) -> Result<(), Failure> {
    let provider = make_provider(config)?.ok_or_else(|| usage(anyhow!("retrieve needs an embedding provider")))?;
    if args.query.trim().is_empty() {
        return Err(usage(anyhow!("query is empty")));
    }
    config.retrieval.validate().map_err(usage)?;
    let source = open_video(config, &args.video)?;
    let frames = sample_at_fps(&source, config.retrieval.fps, config.sampling.long_side).map_err(anyhow::Error::from)?;
    let clips = group_clips(&frames, &config.retrieval).map_err(anyhow::Error::from)?;
    let scores = score_clips(provider.as_ref(), &clips, &args.query).map_err(anyhow::Error::from)?;
    let moments = top_k_segments(&scores, &config.retrieval, source.duration()).map_err(anyhow::Error::from)?;
    print_json(&json!({
        "video_id": source.video_id(),
        "query": args.query,
        "k": config.retrieval.k,
        "moments": moments,
        "scores": scores
            .iter()
            .map(|s| json!({"clip": s.clip_index, "similarity": s.similarity}))
            .collect::<Vec<_>>(),
    }));
    Ok(())
}

fn render(config: &Config, args: RenderArgs) -> Result<(), Failure> {
    let moments: IntervalSet = match &args.highlights {
        Some(text) => serde_json::from_str(text).map_err(|e| usage(anyhow!("--highlights: {e}")))?,
        None => IntervalSet::empty(),
    };
    let source = open_video(config, &args.video)?;
    let frames = sample_frames(&source, &config.sampling, None).map_err(anyhow::Error::from)?;
    let rendered = render_highlights(&frames, &moments, &config.style).map_err(anyhow::Error::from)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut written = Vec::new();
    for frame in rendered.frames() {
        let path = args.out.join(frame_file_name(frame.timestamp()));
        frame
            .pixels()
            .save(&path)
            .with_context(|| format!("writing {}", path.display()))?;
        written.push(path.display().to_string());
    }
    if let Some(path) = &args.strip {
        let width = rendered.frames()[0].width();
        let strip = render_strip(width, args.at, source.duration(), &config.style, &moments)
            .map_err(anyhow::Error::from)?;
        strip.save(path).with_context(|| format!("writing {}", path.display()))?;
        written.push(path.display().to_string());
    }
    print_json(&json!({ "video_id": source.video_id(), "written": written }));
    Ok(())
}

fn resolve_video(video: Option<&Path>, video_id: &str, root: Option<&Path>) -> anyhow::Result<PathBuf> {
    let root = root.unwrap_or(Path::new("."));
    if let Some(v) = video {
        return Ok(if v.is_absolute() { v.to_path_buf() } else { root.join(v) });
    }
    let direct = root.join(video_id);
    if direct.exists() {
        return Ok(direct);
    }
    let entries = fs::read_dir(root).with_context(|| format!("listing {}", root.display()))?;
    let mut candidates: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_stem().is_some_and(|s| s == video_id))
        .collect();
    candidates.sort();
    candidates
        .into_iter()
        .next()
        .ok_or_else(|| anyhow!("no video named {video_id:?} under {}", root.display()))
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn eval(config: &Config, args: EvalArgs) -> Result<(), Failure> {
    let format: DatasetFormat = args.format.parse().map_err(|e: String| usage(anyhow!(e)))?;
    if args.jobs == 0 {
        return Err(usage(anyhow!("--jobs must be at least 1")));
    }
    let imported = import_dataset(&args.dataset, format).map_err(anyhow::Error::from)?;
    for issue in &imported.issues {
        eprintln!("{}:{}: skipped: {}", args.dataset.display(), issue.line, issue.message);
    }
    let answers: BTreeMap<String, String> = if args.run_agent {
        run_items(config, &args, &imported.dataset)?
    } else {
        let path = args.predictions.as_ref().expect("clap requires a prediction source");
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let predictions = parse_predictions(&text).map_err(anyhow::Error::from)?;
        if let Dataset::Grounding(_) = imported.dataset {
            return finish_grounding(&args, &imported.dataset, predictions.segments);
        }
        predictions.answers
    };
    match &imported.dataset {
        Dataset::Grounding(_) => {
            let segments = answers.iter().map(|(id, a)| (id.clone(), extract_intervals(a))).collect();
            finish_grounding(&args, &imported.dataset, segments)
        }
        Dataset::Qa(items) => {
            if let Some(path) = &args.emit_judge_file {
                let mut buf = Vec::new();
                write_judge_file(&mut buf, items, &answers).context("writing judge file")?;
                write_file(path, &buf)?;
            }
            let choice: Vec<_> = items.iter().filter(|i| i.is_multiple_choice()).cloned().collect();
            if choice.len() < items.len() {
                eprintln!(
                    "{} open-ended items are left to the judge file and not scored",
                    items.len() - choice.len()
                );
            }
            let report = evaluate_qa(&answers, &choice).map_err(anyhow::Error::from)?;
            write_report(&args, &serde_json::to_value(&report).expect("report serializes"))
        }
    }
}

fn finish_grounding(
    args: &EvalArgs,
    dataset: &Dataset,
    segments: BTreeMap<String, IntervalSet>,
) -> Result<(), Failure> {
    let Dataset::Grounding(items) = dataset else {
        unreachable!("grounding dataset")
    };
    let report = evaluate_grounding(&segments, items).map_err(anyhow::Error::from)?;
    write_report(args, &serde_json::to_value(&report).expect("report serializes"))
}

fn write_report(args: &EvalArgs, report: &serde_json::Value) -> Result<(), Failure> {
    match &args.report {
        Some(path) => write_file(path, serde_json::to_string_pretty(report).expect("json").as_bytes())?,
        None => print_json(report),
    }
    Ok(())
}

/// One session per item; failed items are reported and left without a
/// prediction.
fn run_items(config: &Config, args: &EvalArgs, dataset: &Dataset) -> Result<BTreeMap<String, String>, Failure> {
    let runner = Runner::new(config)?;
    let jobs: Vec<(String, Option<PathBuf>, String, String)> = match dataset {
        Dataset::Grounding(items) => items
            .iter()
            .map(|i| {
                let q = runner.agent.template.grounding_text(&i.query);
                (i.id.clone(), i.video.clone(), i.video_id.clone(), q)
            })
            .collect(),
        Dataset::Qa(items) => items
            .iter()
            .map(|i| (i.id.clone(), i.video.clone(), i.video_id.clone(), i.prompt_text()))
            .collect(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .context("starting worker pool")?;
    let results: Vec<(String, anyhow::Result<SessionOutcome>)> = pool.install(|| {
        jobs.par_iter()
            .map(|(id, video, video_id, question)| {
                let outcome = resolve_video(video.as_deref(), video_id, args.video_root.as_deref())
                    .and_then(|path| runner.session(&path, question));
                (id.clone(), outcome)
            })
            .collect()
    });
    let mut answers = BTreeMap::new();
    for (id, result) in results {
        match result {
            Ok(outcome) => {
                if let Some(dir) = &args.emit_traces {
                    write_file(&dir.join(format!("{}.json", file_safe(&id))), outcome.trace.to_json().as_bytes())?;
                }
                if let Some(e) = &outcome.trace.error {
                    eprintln!("item {id}: session ended early: {e}");
                }
                if let Some(answer) = outcome.answer {
                    answers.insert(id, answer);
                }
            }
            Err(e) => eprintln!("item {id}: {e:#}"),
        }
    }
    if answers.is_empty() && !jobs.is_empty() {
        return Err(anyhow!("every session failed").into());
    }
    Ok(answers)
}

//! Benchmark harness: datasets, answer-text interval extraction, grounding
//! metrics and multiple-choice accuracy.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::interval::{interval_iou, Interval, IntervalSet};
use crate::scalar::Scalar;

/// IoU thresholds reported as recall@1.
pub const RECALL_THRESHOLDS: [f64; 3] = [0.3, 0.5, 0.7];
const RECALL_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("duplicate item id {0:?}")]
    DuplicateId(String),
    #[error("item {0:?} has no options")]
    NoOptions(String),
    #[error("cannot read {path}: {message}")]
    Unreadable { path: String, message: String },
    #[error("no valid lines in {path} ({} rejected)", .report.len())]
    NothingImported { path: String, report: Vec<ImportIssue> },
    #[error("predictions: {0}")]
    Predictions(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingItem {
    pub id: String,
    pub video_id: String,
    /// Video location, when the dataset names one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub video: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    pub query: String,
    pub ground_truth: IntervalSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaOption {
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAItem {
    pub id: String,
    pub video_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub video: Option<PathBuf>,
    pub question: String,
    pub options: Vec<QaOption>,
    /// Option label for multiple choice, reference text otherwise.
    pub correct: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hint: Option<String>,
}

impl QAItem {
    pub fn is_multiple_choice(&self) -> bool {
        !self.options.is_empty()
    }

    /// Question with its options and hint, as put to the model.
    pub fn prompt_text(&self) -> String {
        let mut text = self.question.clone();
        for o in &self.options {
            text.push_str(&format!("\n{}. {}", o.label, o.text));
        }
        if let Some(h) = &self.hint {
            text.push_str(&format!("\nHint: {h}"));
        }
        text
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemScore {
    pub id: String,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub n_items: usize,
    #[serde(rename = "mIoU")]
    pub miou: f64,
    pub recall_at: BTreeMap<String, f64>,
    pub per_item: Vec<ItemScore>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Mean and recall@1 at each threshold over per-item IoUs.
pub fn summarize_ious<T: Scalar>(ious: &[T], thresholds: &[f64]) -> (T, Vec<T>) {
    if ious.is_empty() {
        return (T::zero(), vec![T::zero(); thresholds.len()]);
    }
    let n = T::of_usize(ious.len());
    let mean = ious.iter().fold(T::zero(), |acc, &x| acc + x) / n;
    let recalls = thresholds
        .iter()
        .map(|&m| {
            let hits = ious.iter().filter(|&&iou| iou >= T::of(m - RECALL_SLACK)).count();
            T::of_usize(hits) / n
        })
        .collect();
    (mean, recalls)
}

fn threshold_key(m: f64) -> String {
    format!("{m}")
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>) -> Result<(), EvalError> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(EvalError::DuplicateId(id.to_string()));
        }
    }
    Ok(())
}

/// Union-based IoU per item; a missing prediction scores as the empty set.
pub fn evaluate_grounding(
    predictions: &BTreeMap<String, IntervalSet>,
    items: &[GroundingItem],
) -> Result<MetricsReport, EvalError> {
    check_unique(items.iter().map(|i| i.id.as_str()))?;
    let empty = IntervalSet::empty();
    let mut warnings = Vec::new();
    let per_item: Vec<ItemScore> = items
        .iter()
        .map(|item| {
            let predicted = predictions.get(&item.id).unwrap_or_else(|| {
                let w = format!("no prediction for item {:?}; scored as empty", item.id);
                tracing::warn!("{w}");
                warnings.push(w);
                &empty
            });
            ItemScore {
                id: item.id.clone(),
                iou: interval_iou(predicted, &item.ground_truth),
            }
        })
        .collect();
    let ious: Vec<f64> = per_item.iter().map(|s| s.iou).collect();
    let (miou, recalls) = summarize_ious(&ious, &RECALL_THRESHOLDS);
    Ok(MetricsReport {
        n_items: items.len(),
        miou,
        recall_at: RECALL_THRESHOLDS
            .iter()
            .zip(recalls)
            .map(|(&m, r)| (threshold_key(m), r))
            .collect(),
        per_item,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QaItemResult {
    pub id: String,
    pub predicted: Option<String>,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QaReport {
    pub n_items: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    pub per_item: Vec<QaItemResult>,
}

fn label_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b([A-E])\b").expect("valid regex"))
}

/// First standalone option letter A to E in `text`.
pub fn extract_option_label(text: &str) -> Option<String> {
    label_regex().captures(text).map(|c| c[1].to_string())
}

pub fn evaluate_qa(predictions: &BTreeMap<String, String>, items: &[QAItem]) -> Result<QaReport, EvalError> {
    check_unique(items.iter().map(|i| i.id.as_str()))?;
    if let Some(item) = items.iter().find(|i| !i.is_multiple_choice()) {
        return Err(EvalError::NoOptions(item.id.clone()));
    }
    let per_item: Vec<QaItemResult> = items
        .iter()
        .map(|item| {
            let predicted = predictions.get(&item.id).and_then(|p| extract_option_label(p));
            QaItemResult {
                id: item.id.clone(),
                correct: predicted.as_deref() == Some(item.correct.as_str()),
                predicted,
            }
        })
        .collect();
    let n_correct = per_item.iter().filter(|r| r.correct).count();
    Ok(QaReport {
        n_items: items.len(),
        n_correct,
        accuracy: if items.is_empty() { 0.0 } else { n_correct as f64 / items.len() as f64 },
        per_item,
    })
}

fn range_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?x)
            (?P<a>\d+(?:\.\d+)?) \s* (?:seconds|secs?|s)? \s*
            (?:to|-|–) \s*
            (?P<b>\d+(?:\.\d+)?)
            |
            \[ \s* (?P<c>\d+(?:\.\d+)?) \s* , \s* (?P<d>\d+(?:\.\d+)?) \s* \]",
        )
        .expect("valid regex")
    })
}

/// Time ranges written in a free-text answer: `a to b`, `a-b`, `a–b`
/// (optionally with a seconds unit) and `[a, b]`. Matches with `a >= b` are
/// dropped.
pub fn extract_intervals(answer: &str) -> IntervalSet {
    let intervals = range_regex().captures_iter(answer).filter_map(|c| {
        let (a, b) = match (c.name("a"), c.name("b")) {
            (Some(a), Some(b)) => (a, b),
            _ => (c.name("c")?, c.name("d")?),
        };
        let a = f64::from_str(a.as_str()).ok()?;
        let b = f64::from_str(b.as_str()).ok()?;
        Interval::new(a, b).ok()
    });
    IntervalSet::normalize(intervals)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    CharadesLines,
    Jsonl,
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "charades-lines" => Ok(Self::CharadesLines),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(format!("unknown dataset format {other:?}; expected charades-lines or jsonl")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Grounding(Vec<GroundingItem>),
    Qa(Vec<QAItem>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Grounding(items) => items.len(),
            Dataset::Qa(items) => items.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A rejected input line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImportIssue {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Imported {
    pub dataset: Dataset,
    pub issues: Vec<ImportIssue>,
}

fn grounding_truth(pairs: &[(f64, f64)], duration: Option<f64>) -> Result<IntervalSet, String> {
    let set = IntervalSet::from_pairs(pairs).map_err(|e| e.to_string())?;
    if set.is_empty() {
        return Err("no ground-truth segments".into());
    }
    if let (Some(d), Some(last)) = (duration, set.intervals().last()) {
        if last.end() > d {
            return Err(format!("segment ends at {} past the duration {d}", last.end()));
        }
    }
    Ok(set)
}

fn parse_charades_line(line: &str, ordinal: usize) -> Result<GroundingItem, String> {
    let (head, query) = line.split_once("##").ok_or("missing `##` separator")?;
    let query = query.trim();
    if query.is_empty() {
        return Err("empty query".into());
    }
    let fields: Vec<&str> = head.split_whitespace().collect();
    let [video_id, start, end] = fields[..] else {
        return Err(format!("expected `<video_id> <start> <end>` before `##`, got {} fields", fields.len()));
    };
    let number = |s: &str| f64::from_str(s).map_err(|_| format!("not a number: {s:?}"));
    let ground_truth = grounding_truth(&[(number(start)?, number(end)?)], None)?;
    Ok(GroundingItem {
        id: format!("{video_id}:{ordinal}"),
        video_id: video_id.to_string(),
        video: None,
        duration: None,
        query: query.to_string(),
        ground_truth,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundingLine {
    id: Option<String>,
    video_id: String,
    video: Option<PathBuf>,
    duration: Option<f64>,
    query: String,
    segments: Vec<(f64, f64)>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OptionsField {
    List(Vec<String>),
    Map(BTreeMap<String, String>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QaLine {
    id: Option<String>,
    video_id: String,
    video: Option<PathBuf>,
    question: String,
    #[serde(default)]
    options: Option<OptionsField>,
    answer: String,
    hint: Option<String>,
}

enum JsonItem {
    Grounding(GroundingItem),
    Qa(QAItem),
}

fn parse_json_line(line: &str, ordinal: usize) -> Result<JsonItem, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let object = value.as_object().ok_or("expected a JSON object")?;
    if object.contains_key("segments") {
        let g: GroundingLine = serde_json::from_value(value).map_err(|e| e.to_string())?;
        if g.query.trim().is_empty() {
            return Err("empty query".into());
        }
        let ground_truth = grounding_truth(&g.segments, g.duration)?;
        return Ok(JsonItem::Grounding(GroundingItem {
            id: g.id.unwrap_or_else(|| format!("{}:{ordinal}", g.video_id)),
            video_id: g.video_id,
            video: g.video,
            duration: g.duration,
            query: g.query.trim().to_string(),
            ground_truth,
        }));
    }
    if object.contains_key("question") {
        let q: QaLine = serde_json::from_value(value).map_err(|e| e.to_string())?;
        let options: Vec<QaOption> = match q.options {
            None => Vec::new(),
            Some(OptionsField::List(texts)) => {
                if texts.len() > 5 {
                    return Err("at most 5 options (A to E) are supported".into());
                }
                texts
                    .into_iter()
                    .zip(["A", "B", "C", "D", "E"])
                    .map(|(text, label)| QaOption {
                        label: label.into(),
                        text,
                    })
                    .collect()
            }
            Some(OptionsField::Map(map)) => map.into_iter().map(|(label, text)| QaOption { label, text }).collect(),
        };
        if !options.is_empty() {
            if options.len() < 2 {
                return Err("multiple-choice items need at least 2 options".into());
            }
            if !options.iter().any(|o| o.label == q.answer) {
                return Err(format!("answer {:?} is not one of the option labels", q.answer));
            }
        }
        return Ok(JsonItem::Qa(QAItem {
            id: q.id.unwrap_or_else(|| format!("{}:{ordinal}", q.video_id)),
            video_id: q.video_id,
            video: q.video,
            question: q.question,
            options,
            correct: q.answer,
            hint: q.hint,
        }));
    }
    Err("object has neither `segments` nor `question`".into())
}

/// Parses `text`; blank lines and `#` comments are skipped, bad lines are
/// reported and skipped.
pub fn import_str(text: &str, format: DatasetFormat) -> (Option<Dataset>, Vec<ImportIssue>) {
    let mut grounding = Vec::new();
    let mut qa = Vec::new();
    let mut issues = Vec::new();
    let mut ordinal = 0;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let result = match format {
            DatasetFormat::CharadesLines => parse_charades_line(line, ordinal).map(JsonItem::Grounding),
            DatasetFormat::Jsonl => parse_json_line(line, ordinal),
        };
        let result = result.and_then(|item| match item {
            JsonItem::Grounding(_) if !qa.is_empty() => Err("grounding item in a QA dataset".to_string()),
            JsonItem::Qa(_) if !grounding.is_empty() => Err("QA item in a grounding dataset".to_string()),
            item => Ok(item),
        });
        match result {
            Ok(JsonItem::Grounding(item)) => grounding.push(item),
            Ok(JsonItem::Qa(item)) => qa.push(item),
            Err(message) => {
                issues.push(ImportIssue { line: n + 1, message });
                continue;
            }
        }
        ordinal += 1;
    }
    let dataset = match (grounding.is_empty(), qa.is_empty()) {
        (false, _) => Some(Dataset::Grounding(grounding)),
        (true, false) => Some(Dataset::Qa(qa)),
        (true, true) => None,
    };
    (dataset, issues)
}

pub fn import_dataset(path: &Path, format: DatasetFormat) -> Result<Imported, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Unreadable {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    match import_str(&text, format) {
        (Some(dataset), issues) => {
            for issue in &issues {
                tracing::warn!("{}:{}: {}", path.display(), issue.line, issue.message);
            }
            Ok(Imported { dataset, issues })
        }
        (None, report) => Err(EvalError::NothingImported {
            path: path.display().to_string(),
            report,
        }),
    }
}

/// Predictions keyed by item id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predictions {
    pub answers: BTreeMap<String, String>,
    pub segments: BTreeMap<String, IntervalSet>,
}

/// Reads a JSON object mapping item ids to either answer text or a list of
/// `[start, end]` pairs. Text answers also contribute the intervals they
/// mention.
pub fn parse_predictions(text: &str) -> Result<Predictions, EvalError> {
    let map: BTreeMap<String, Value> =
        serde_json::from_str(text).map_err(|e| EvalError::Predictions(e.to_string()))?;
    let mut out = Predictions::default();
    for (id, value) in map {
        match value {
            Value::String(answer) => {
                out.segments.insert(id.clone(), extract_intervals(&answer));
                out.answers.insert(id, answer);
            }
            other => {
                let set: IntervalSet = serde_json::from_value(other)
                    .map_err(|e| EvalError::Predictions(format!("{id}: {e}")))?;
                out.segments.insert(id, set);
            }
        }
    }
    Ok(out)
}

/// One JSON line per open-ended item for an external judge.
pub fn write_judge_file<W: Write>(
    out: &mut W,
    items: &[QAItem],
    predictions: &BTreeMap<String, String>,
) -> std::io::Result<()> {
    for item in items {
        let line = serde_json::json!({
            "id": item.id,
            "video_id": item.video_id,
            "question": item.prompt_text(),
            "reference": item.correct,
            "prediction": predictions.get(&item.id),
        });
        writeln!(out, "{line}")?;
    }
    Ok(())
}

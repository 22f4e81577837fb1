//! Prompt templates. The wording lives in `prompts/<version>/*.txt`; the
//! built-in set is compiled in, other versions load from a directory.

use std::collections::BTreeMap;
use std::path::Path;

use super::action::{ToolName, Toolset};
use super::AgentError;
use crate::backends::{ChatTurn, FrameAttachment};

pub const BUILTIN_VERSION: &str = "v1";
const TOOLS_PLACEHOLDER: &str = "{tools}";

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub version: String,
    /// Output-structure rules and toolset; `{tools}` receives the tool docs.
    pub system_preamble: String,
    pub tool_docs: BTreeMap<ToolName, String>,
    pub force_answer_suffix: String,
    /// Question used by grounding runs; `{query}` receives the event text.
    pub grounding_question: String,
    /// Caption of every frame attachment: `{version}`, `{count}`, `{start}`, `{end}`.
    pub frames_note: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::builtin()
    }
}

fn tool_file(tool: ToolName) -> String {
    format!("tool_{}.txt", tool.as_str())
}

impl PromptTemplate {
    pub fn builtin() -> Self {
        let docs = [
            (ToolName::ProgressBar, include_str!("../../prompts/v1/tool_progress_bar.txt")),
            (ToolName::Highlight, include_str!("../../prompts/v1/tool_highlight.txt")),
            (ToolName::Cut, include_str!("../../prompts/v1/tool_cut.txt")),
        ];
        Self {
            version: BUILTIN_VERSION.into(),
            system_preamble: include_str!("../../prompts/v1/system.txt").into(),
            tool_docs: docs.into_iter().map(|(t, d)| (t, d.to_string())).collect(),
            force_answer_suffix: include_str!("../../prompts/v1/force_answer.txt").into(),
            grounding_question: include_str!("../../prompts/v1/grounding_question.txt").into(),
            frames_note: include_str!("../../prompts/v1/frames_note.txt").into(),
        }
    }

    /// Loads a template directory laid out like `prompts/v1`.
    pub fn load_dir(dir: &Path) -> Result<Self, AgentError> {
        let read = |name: &str| {
            std::fs::read_to_string(dir.join(name))
                .map_err(|e| AgentError::Prompt(format!("{}: {e}", dir.join(name).display())))
        };
        let mut tool_docs = BTreeMap::new();
        for tool in ToolName::ALL {
            tool_docs.insert(tool, read(&tool_file(tool))?);
        }
        let template = Self {
            version: dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "custom".into()),
            system_preamble: read("system.txt")?,
            tool_docs,
            force_answer_suffix: read("force_answer.txt")?,
            grounding_question: read("grounding_question.txt")?,
            frames_note: read("frames_note.txt")?,
        };
        template.validate()?;
        Ok(template)
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        for keyword in ["THOUGHT", "ACTION", "TERMINATE"] {
            if !self.system_preamble.contains(keyword) {
                return Err(AgentError::Prompt(format!("system preamble never names {keyword}")));
            }
        }
        if !self.system_preamble.contains(TOOLS_PLACEHOLDER) {
            return Err(AgentError::Prompt(format!("system preamble lacks the {TOOLS_PLACEHOLDER} slot")));
        }
        if !self.grounding_question.contains("{query}") {
            return Err(AgentError::Prompt("grounding question lacks the {query} slot".into()));
        }
        Ok(())
    }

    pub fn system_text(&self, toolset: &Toolset) -> Result<String, AgentError> {
        if toolset.is_empty() {
            return Err(AgentError::EmptyToolset);
        }
        let docs: Vec<&str> = toolset
            .iter()
            .map(|t| self.tool_docs.get(&t).map(|d| d.trim_end()).unwrap_or_default())
            .collect();
        Ok(self.system_preamble.replace(TOOLS_PLACEHOLDER, &docs.join("\n")))
    }

    pub fn grounding_text(&self, query: &str) -> String {
        self.grounding_question.replace("{query}", query).trim_end().to_string()
    }

    pub fn frames_text(&self, attachment: &FrameAttachment) -> String {
        let window = attachment.frames.window();
        self.frames_note
            .replace("{version}", &attachment.memory_version.to_string())
            .replace("{count}", &attachment.frames.len().to_string())
            .replace("{start}", &trim_number(window.start()))
            .replace("{end}", &trim_number(window.end()))
            .trim_end()
            .to_string()
    }

    /// User turn carrying refreshed frames.
    pub fn frames_turn(&self, attachment: FrameAttachment) -> ChatTurn {
        ChatTurn::user(self.frames_text(&attachment), Some(attachment))
    }
}

fn trim_number(x: f64) -> String {
    let s = format!("{x:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// System turn with the enabled tools' docs, then the question with the
/// initial frames.
pub fn build_init_prompt(
    question: &str,
    template: &PromptTemplate,
    toolset: &Toolset,
    frames: FrameAttachment,
) -> Result<Vec<ChatTurn>, AgentError> {
    if question.trim().is_empty() {
        return Err(AgentError::EmptyQuestion);
    }
    let system = template.system_text(toolset)?;
    let text = format!("QUESTION: {}\n\n{}", question.trim(), template.frames_text(&frames));
    Ok(vec![ChatTurn::system(system), ChatTurn::user(text, Some(frames))])
}

//! Splitting a model reply into THOUGHT / ACTION / ANSWER / TERMINATE parts.

use serde::Serialize;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParsedStep {
    pub thought: String,
    pub action: Option<String>,
    pub terminate: bool,
    pub answer: Option<String>,
    /// Set when the reply has no THOUGHT section.
    pub diagnostic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Thought,
    Action,
    Answer,
    /// Text after TERMINATE.
    Closed,
}

const KEYWORDS: [(&str, Section); 3] = [
    ("THOUGHT:", Section::Thought),
    ("ACTION:", Section::Action),
    ("ANSWER:", Section::Answer),
];

fn is_terminate(line: &str) -> bool {
    line.strip_prefix("TERMINATE")
        .is_some_and(|rest| !rest.starts_with(|c: char| c.is_alphanumeric() || c == '_'))
}

/// First fenced block of `text`, without the fence lines; the whole trimmed
/// text when there is no fence.
fn fenced_block(text: &str) -> String {
    let mut lines = text.lines();
    let mut inside = None;
    for line in lines.by_ref() {
        if line.trim_start().starts_with("```") {
            inside = Some(Vec::new());
            break;
        }
    }
    match inside {
        None => text.trim().to_string(),
        Some(mut body) => {
            for line in lines {
                if line.trim_start().starts_with("```") {
                    break;
                }
                body.push(line);
            }
            body.join("\n").trim().to_string()
        }
    }
}

/// Keywords are case-sensitive and only recognized at the start of a line
/// (leading whitespace allowed); lines inside a fenced block are never
/// keywords.
pub fn parse_response(text: &str) -> ParsedStep {
    let mut sections: Vec<(Section, String)> = Vec::new();
    let mut terminate = false;
    let mut in_fence = false;
    for line in text.lines() {
        let trimmed = line.trim_start();
        if !in_fence {
            if is_terminate(trimmed) {
                terminate = true;
                sections.push((Section::Closed, String::new()));
                continue;
            }
            if let Some((rest, section)) = KEYWORDS
                .iter()
                .find_map(|(kw, section)| trimmed.strip_prefix(kw).map(|rest| (rest, *section)))
            {
                sections.push((section, rest.trim_start().to_string()));
                if rest.trim_start().starts_with("```") {
                    in_fence = true;
                }
                continue;
            }
        }
        if trimmed.starts_with("```") {
            in_fence = !in_fence;
        }
        if let Some((_, body)) = sections.last_mut() {
            body.push('\n');
            body.push_str(line);
        }
    }
    let first = |wanted: Section| {
        sections
            .iter()
            .find(|(s, _)| *s == wanted)
            .map(|(_, body)| body.as_str())
    };
    let thought = first(Section::Thought);
    let action = first(Section::Action)
        .map(fenced_block)
        .filter(|a| !a.is_empty());
    let answer = first(Section::Answer)
        .map(|a| a.trim().to_string())
        .filter(|a| !a.is_empty());
    ParsedStep {
        thought: thought.map(|t| t.trim().to_string()).unwrap_or_default(),
        action,
        terminate,
        answer,
        diagnostic: thought.is_none(),
    }
}

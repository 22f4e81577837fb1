//! The restricted action language the model uses to call tools.
//!
//! One statement per line:
//!
//! ```text
//! statement := name '(' [ arg { ',' arg } ] ')'
//! arg       := value | name '=' value
//! value     := "double-quoted string" | integer | decimal
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Names are checked
//! against the enabled toolset and arguments against each tool's signature.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    ProgressBar,
    Highlight,
    Cut,
}

impl ToolName {
    pub const ALL: [ToolName; 3] = [ToolName::ProgressBar, ToolName::Highlight, ToolName::Cut];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::ProgressBar => "progress_bar",
            ToolName::Highlight => "highlight",
            ToolName::Cut => "cut",
        }
    }

    fn params(self) -> &'static [Param] {
        const HIGHLIGHT: &[Param] = &[
            Param { name: "query", kind: ArgKind::Str, required: true },
            Param { name: "k", kind: ArgKind::Count, required: false },
        ];
        const CUT: &[Param] = &[
            Param { name: "start", kind: ArgKind::Seconds, required: true },
            Param { name: "end", kind: ArgKind::Seconds, required: true },
        ];
        match self {
            ToolName::ProgressBar => &[],
            ToolName::Highlight => HIGHLIGHT,
            ToolName::Cut => CUT,
        }
    }

    /// Signature as shown to the model, e.g. `cut(start, end)`.
    pub fn signature(self) -> String {
        let params: Vec<String> = self
            .params()
            .iter()
            .map(|p| if p.required { p.name.to_string() } else { format!("{}=...", p.name) })
            .collect();
        format!("{}({})", self.as_str(), params.join(", "))
    }
}

impl fmt::Display for ToolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToolName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ToolName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown tool `{s}`"))
    }
}

/// Enabled tools, in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Toolset(BTreeSet<ToolName>);

impl Default for Toolset {
    fn default() -> Self {
        Self(ToolName::ALL.into_iter().collect())
    }
}

impl Toolset {
    pub fn new(tools: impl IntoIterator<Item = ToolName>) -> Self {
        Self(tools.into_iter().collect())
    }

    pub fn contains(&self, tool: ToolName) -> bool {
        self.0.contains(&tool)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ToolName> + '_ {
        self.0.iter().copied()
    }
}

impl fmt::Display for Toolset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|t| t.as_str()).collect();
        f.write_str(&names.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "tool", rename_all = "snake_case")]
pub enum ToolCall {
    ProgressBar,
    Highlight { query: String, k: Option<usize> },
    Cut { start: f64, end: f64 },
}

impl ToolCall {
    pub fn name(&self) -> ToolName {
        match self {
            ToolCall::ProgressBar => ToolName::ProgressBar,
            ToolCall::Highlight { .. } => ToolName::Highlight,
            ToolCall::Cut { .. } => ToolName::Cut,
        }
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Canonical source form; parsing it yields the same call.
impl fmt::Display for ToolCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ToolCall::ProgressBar => f.write_str("progress_bar()"),
            ToolCall::Highlight { query, k: None } => write!(f, "highlight({})", quote(query)),
            ToolCall::Highlight { query, k: Some(k) } => write!(f, "highlight({}, k={k})", quote(query)),
            ToolCall::Cut { start, end } => write!(f, "cut({start}, {end})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActionErrorKind {
    Syntax(String),
    UnknownTool(String),
    Arity(String),
    Type(String),
}

/// Diagnostic with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {}", describe(.kind))]
pub struct ActionError {
    pub line: usize,
    pub column: usize,
    pub kind: ActionErrorKind,
}

fn describe(kind: &ActionErrorKind) -> String {
    match kind {
        ActionErrorKind::Syntax(m) => format!("syntax error: {m}"),
        ActionErrorKind::UnknownTool(name) => format!("unknown tool `{name}`"),
        ActionErrorKind::Arity(m) => format!("wrong arguments: {m}"),
        ActionErrorKind::Type(m) => format!("type error: {m}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ArgKind {
    Str,
    /// Positive integer.
    Count,
    /// Integer or decimal.
    Seconds,
}

struct Param {
    name: &'static str,
    kind: ArgKind,
    required: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Str(String),
    Int(i64),
    Dec(f64),
}

impl Value {
    fn type_name(&self) -> &'static str {
        match self {
            Value::Str(_) => "string",
            Value::Int(_) => "integer",
            Value::Dec(_) => "decimal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Lit(Value),
    LParen,
    RParen,
    Comma,
    Eq,
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: usize,
}

impl Lexer {
    fn new(src: &str, line: usize) -> Self {
        Self {
            chars: src.chars().collect(),
            pos: 0,
            line,
        }
    }

    fn err(&self, column: usize, msg: impl Into<String>) -> ActionError {
        ActionError {
            line: self.line,
            column,
            kind: ActionErrorKind::Syntax(msg.into()),
        }
    }

    /// Tokens with their 1-based start columns.
    fn tokens(mut self) -> Result<Vec<(Tok, usize)>, ActionError> {
        let mut out = Vec::new();
        while self.pos < self.chars.len() {
            let c = self.chars[self.pos];
            let col = self.pos + 1;
            match c {
                c if c.is_whitespace() => self.pos += 1,
                '(' => {
                    out.push((Tok::LParen, col));
                    self.pos += 1;
                }
                ')' => {
                    out.push((Tok::RParen, col));
                    self.pos += 1;
                }
                ',' => {
                    out.push((Tok::Comma, col));
                    self.pos += 1;
                }
                '=' => {
                    out.push((Tok::Eq, col));
                    self.pos += 1;
                }
                '"' => out.push((Tok::Lit(Value::Str(self.string()?)), col)),
                c if c.is_ascii_digit() || c == '-' || c == '.' => out.push((Tok::Lit(self.number()?), col)),
                c if c.is_alphabetic() || c == '_' => {
                    let start = self.pos;
                    while self.pos < self.chars.len()
                        && (self.chars[self.pos].is_alphanumeric() || self.chars[self.pos] == '_')
                    {
                        self.pos += 1;
                    }
                    out.push((Tok::Ident(self.chars[start..self.pos].iter().collect()), col));
                }
                other => return Err(self.err(col, format!("unexpected character {other:?}"))),
            }
        }
        Ok(out)
    }

    fn string(&mut self) -> Result<String, ActionError> {
        let open = self.pos + 1;
        self.pos += 1;
        let mut s = String::new();
        while self.pos < self.chars.len() {
            let c = self.chars[self.pos];
            self.pos += 1;
            match c {
                '"' => return Ok(s),
                '\\' => {
                    let esc = self.chars.get(self.pos).copied();
                    self.pos += 1;
                    match esc {
                        Some('"') => s.push('"'),
                        Some('\\') => s.push('\\'),
                        Some('n') => s.push('\n'),
                        Some('t') => s.push('\t'),
                        Some(other) => return Err(self.err(self.pos - 1, format!("unknown escape \\{other}"))),
                        None => break,
                    }
                }
                c => s.push(c),
            }
        }
        Err(self.err(open, "unterminated string"))
    }

    fn number(&mut self) -> Result<Value, ActionError> {
        let start = self.pos;
        if self.chars[self.pos] == '-' {
            self.pos += 1;
        }
        let digits_from = self.pos;
        while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let int_digits = self.pos - digits_from;
        let mut is_decimal = false;
        if self.pos < self.chars.len() && self.chars[self.pos] == '.' {
            is_decimal = true;
            self.pos += 1;
            let frac_from = self.pos;
            while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == frac_from {
                return Err(self.err(start + 1, "decimal needs digits after the point"));
            }
        }
        if int_digits == 0 {
            return Err(self.err(start + 1, "number needs digits before the point"));
        }
        if self.pos < self.chars.len() && (self.chars[self.pos].is_alphanumeric() || self.chars[self.pos] == '_') {
            return Err(self.err(self.pos + 1, "malformed number"));
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        if is_decimal {
            text.parse::<f64>()
                .map(Value::Dec)
                .map_err(|_| self.err(start + 1, "malformed decimal"))
        } else {
            text.parse::<i64>()
                .map(Value::Int)
                .map_err(|_| self.err(start + 1, "integer out of range"))
        }
    }
}

struct RawArg {
    key: Option<String>,
    value: Value,
    column: usize,
}

fn parse_statement(line_no: usize, text: &str, toolset: &Toolset) -> Result<ToolCall, ActionError> {
    let lexer = Lexer::new(text, line_no);
    let err = |column: usize, kind: ActionErrorKind| ActionError {
        line: line_no,
        column,
        kind,
    };
    let syntax = |column: usize, msg: &str| err(column, ActionErrorKind::Syntax(msg.to_string()));
    let first_col = text.chars().position(|c| !c.is_whitespace()).map_or(1, |p| p + 1);
    let toks = match lexer.tokens() {
        Ok(t) => t,
        // `import os`, `x = 1 + 2`: report the statement form before lexical detail
        Err(e) if !text.trim_start().starts_with(|c: char| c.is_alphabetic() || c == '_') => return Err(e),
        Err(e) => {
            let head: String = text
                .trim_start()
                .chars()
                .take_while(|c| c.is_alphanumeric() || *c == '_')
                .collect();
            let after = text.trim_start()[head.len()..].trim_start();
            if !after.starts_with('(') {
                return Err(syntax(first_col, "unknown statement form"));
            }
            return Err(e);
        }
    };
    let mut it = toks.into_iter().peekable();
    let (name, name_col) = match it.next() {
        Some((Tok::Ident(name), col)) => (name, col),
        _ => return Err(syntax(first_col, "unknown statement form")),
    };
    let open_col = match it.next() {
        Some((Tok::LParen, col)) => col,
        _ => return Err(syntax(first_col, "unknown statement form")),
    };
    let mut args = Vec::new();
    let close_col;
    if matches!(it.peek(), Some((Tok::RParen, _))) {
        close_col = it.next().map(|(_, c)| c).unwrap_or(open_col);
    } else {
        loop {
            let arg = match it.next() {
                Some((Tok::Ident(key), kcol)) => match it.next() {
                    Some((Tok::Eq, _)) => match it.next() {
                        Some((Tok::Lit(v), _)) => RawArg { key: Some(key), value: v, column: kcol },
                        Some((_, c)) => return Err(syntax(c, "expected a string or number after `=`")),
                        None => return Err(syntax(text.chars().count() + 1, "expected a value after `=`")),
                    },
                    Some((_, c)) => return Err(syntax(c, "expected `=` after argument name")),
                    None => return Err(syntax(text.chars().count() + 1, "expected `=` after argument name")),
                },
                Some((Tok::Lit(v), c)) => RawArg { key: None, value: v, column: c },
                Some((_, c)) => return Err(syntax(c, "expected an argument")),
                None => return Err(syntax(text.chars().count() + 1, "missing `)`")),
            };
            args.push(arg);
            match it.next() {
                Some((Tok::Comma, _)) => continue,
                Some((Tok::RParen, c)) => {
                    close_col = c;
                    break;
                }
                Some((_, c)) => return Err(syntax(c, "expected `,` or `)`")),
                None => return Err(syntax(text.chars().count() + 1, "missing `)`")),
            }
        }
    }
    if let Some((_, c)) = it.next() {
        return Err(syntax(c, "unexpected text after `)`"));
    }
    let tool: ToolName = name
        .parse()
        .map_err(|_| err(name_col, ActionErrorKind::UnknownTool(name.clone())))?;
    if !toolset.contains(tool) {
        return Err(err(name_col, ActionErrorKind::UnknownTool(name)));
    }
    bind(tool, args, line_no, close_col)
}

fn bind(tool: ToolName, args: Vec<RawArg>, line: usize, close_col: usize) -> Result<ToolCall, ActionError> {
    let params = tool.params();
    let mut slots: Vec<Option<(Value, usize)>> = vec![None; params.len()];
    let mut seen_keyword = false;
    for (n, arg) in args.into_iter().enumerate() {
        let err = |kind| ActionError { line, column: arg.column, kind };
        let slot = match &arg.key {
            None => {
                if seen_keyword {
                    return Err(err(ActionErrorKind::Syntax("positional argument after keyword argument".into())));
                }
                if n >= params.len() {
                    return Err(err(ActionErrorKind::Arity(format!(
                        "{} takes at most {} argument(s)",
                        tool.signature(),
                        params.len()
                    ))));
                }
                n
            }
            Some(key) => {
                seen_keyword = true;
                params.iter().position(|p| p.name == key).ok_or_else(|| {
                    err(ActionErrorKind::Arity(format!("{} has no parameter `{key}`", tool.signature())))
                })?
            }
        };
        if slots[slot].is_some() {
            return Err(err(ActionErrorKind::Arity(format!("`{}` given twice", params[slot].name))));
        }
        slots[slot] = Some((arg.value, arg.column));
    }
    let mut values = Vec::with_capacity(params.len());
    for (param, slot) in params.iter().zip(slots) {
        match slot {
            None if param.required => {
                return Err(ActionError {
                    line,
                    column: close_col,
                    kind: ActionErrorKind::Arity(format!("{} is missing `{}`", tool.signature(), param.name)),
                })
            }
            None => values.push(None),
            Some((value, column)) => {
                let type_err = |expected: &str| ActionError {
                    line,
                    column,
                    kind: ActionErrorKind::Type(format!(
                        "`{}` must be {expected}, got {}",
                        param.name,
                        value.type_name()
                    )),
                };
                let checked = match (param.kind, &value) {
                    (ArgKind::Str, Value::Str(_)) => value.clone(),
                    (ArgKind::Str, _) => return Err(type_err("a string")),
                    (ArgKind::Count, Value::Int(k)) if *k >= 1 => value.clone(),
                    (ArgKind::Count, _) => return Err(type_err("a positive integer")),
                    (ArgKind::Seconds, Value::Int(_) | Value::Dec(_)) => value.clone(),
                    (ArgKind::Seconds, _) => return Err(type_err("a number of seconds")),
                };
                values.push(Some(checked));
            }
        }
    }
    let seconds = |v: &Option<Value>| match v {
        Some(Value::Int(i)) => *i as f64,
        Some(Value::Dec(d)) => *d,
        _ => unreachable!("checked above"),
    };
    Ok(match tool {
        ToolName::ProgressBar => ToolCall::ProgressBar,
        ToolName::Highlight => ToolCall::Highlight {
            query: match &values[0] {
                Some(Value::Str(s)) => s.clone(),
                _ => unreachable!("checked above"),
            },
            k: match values[1] {
                Some(Value::Int(k)) => Some(k as usize),
                _ => None,
            },
        },
        ToolName::Cut => ToolCall::Cut {
            start: seconds(&values[0]),
            end: seconds(&values[1]),
        },
    })
}

/// Parses an action block against the full toolset.
pub fn parse_action(block: &str) -> Result<Vec<ToolCall>, ActionError> {
    parse_action_with(block, &Toolset::default())
}

pub fn parse_action_with(block: &str, toolset: &Toolset) -> Result<Vec<ToolCall>, ActionError> {
    let mut calls = Vec::new();
    for (n, line) in block.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        calls.push(parse_statement(n + 1, line, toolset)?);
    }
    if calls.is_empty() {
        return Err(ActionError {
            line: 1,
            column: 1,
            kind: ActionErrorKind::Syntax("action block contains no statements".into()),
        });
    }
    Ok(calls)
}

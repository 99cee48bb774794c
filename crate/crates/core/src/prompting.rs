//! Prompt assembly (text, instruction, examples) and parsing of the
//! line-oriented `(head | relation | tail)` output format.

use crate::error::{Error, Result};
use crate::model::{Entity, RawTriple};

pub const DEFAULT_INSTRUCTION: &str = "Based on the text above, extract at least {min_triples} \
knowledge triples whose head entity is \"{entity}\". Output one triple per line in the format \
(head | relation | tail) and nothing else.";

/// Instruction text with mandatory `{entity}` and `{min_triples}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionTemplate(String);

impl InstructionTemplate {
    pub fn new(template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        for placeholder in ["{entity}", "{min_triples}"] {
            if !template.contains(placeholder) {
                return Err(Error::Config(format!(
                    "instruction template is missing the {placeholder} placeholder"
                )));
            }
        }
        Ok(InstructionTemplate(template))
    }

    pub fn render(&self, entity: &Entity, min_triples: usize) -> String {
        self.0
            .replace("{min_triples}", &min_triples.to_string())
            .replace("{entity}", entity.surface())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Default for InstructionTemplate {
    fn default() -> Self {
        InstructionTemplate(DEFAULT_INSTRUCTION.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub entity: Entity,
    /// Retrieved domain text; empty disables the text segment.
    pub text: String,
    pub instruction: String,
    /// Example triples; empty disables the example segment.
    pub examples: Vec<RawTriple>,
}

impl PromptBundle {
    pub fn new(
        entity: Entity,
        text: String,
        template: &InstructionTemplate,
        min_triples: usize,
        examples: Vec<RawTriple>,
    ) -> Self {
        let instruction = template.render(&entity, min_triples);
        PromptBundle {
            entity,
            text,
            instruction,
            examples,
        }
    }
}

pub fn render_triple(t: &RawTriple) -> String {
    format!("({} | {} | {})", t.head, t.relation, t.tail)
}

/// Render a bundle as `text`, `instruction`, `examples`, separated by blank
/// lines. Empty text or example segments are left out.
pub fn build_prompt(b: &PromptBundle) -> String {
    let mut segments = Vec::with_capacity(3);
    if !b.text.trim().is_empty() {
        segments.push(format!("Text:\n{}", b.text.trim()));
    }
    segments.push(b.instruction.clone());
    if !b.examples.is_empty() {
        let lines: Vec<String> = b.examples.iter().map(render_triple).collect();
        segments.push(format!("Examples:\n{}", lines.join("\n")));
    }
    segments.join("\n\n")
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedOutput {
    pub triples: Vec<RawTriple>,
    /// 1-based line number and the raw line.
    pub malformed_lines: Vec<(usize, String)>,
}

/// True when `s` is wrapped in one pair of parentheses that close only at
/// the very end.
fn wrapped_in_parens(s: &str) -> bool {
    if !(s.starts_with('(') && s.ends_with(')')) {
        return false;
    }
    let mut depth = 0i32;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 && i + 1 != s.len() {
                    return false;
                }
            }
            _ => {}
        }
    }
    depth == 0
}

fn parse_line(line: &str) -> Option<RawTriple> {
    let mut body = line.trim();
    if wrapped_in_parens(body) {
        body = &body[1..body.len() - 1];
    }
    let fields: Vec<&str> = body.split('|').map(str::trim).collect();
    match fields[..] {
        [h, r, t] if !h.is_empty() && !r.is_empty() && !t.is_empty() => Some(RawTriple::new(h, r, t)),
        _ => None,
    }
}

/// Parse model output line by line. Blank lines are ignored; anything that
/// is not a three-field triple is kept as a malformed line.
pub fn parse_triples(raw: &str) -> ParsedOutput {
    let mut out = ParsedOutput::default();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line) {
            Some(t) => out.triples.push(t),
            None => out.malformed_lines.push((i + 1, line.to_string())),
        }
    }
    out
}

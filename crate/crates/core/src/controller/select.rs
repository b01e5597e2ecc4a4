use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::parse::{Lexicon, ParsedInstruction};
use crate::toolkit::{Registry, ToolDescriptor};

pub const NAME_WEIGHT: u32 = 3;
pub const DESCRIPTION_WEIGHT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Selection {
    Tool { name: String, score: u32 },
    Clarify { question: String },
}

fn token_set(lexicon: &Lexicon, text: &str) -> BTreeSet<String> {
    lexicon.tokenize(text).into_iter().collect()
}

/// `3 * |tokens ∩ name tokens| + |tokens ∩ description tokens|`, over sets.
pub fn score(parsed: &ParsedInstruction, tool: &ToolDescriptor, lexicon: &Lexicon) -> u32 {
    let tokens: BTreeSet<&str> = parsed.content_tokens.iter().map(String::as_str).collect();
    let hits = |set: BTreeSet<String>| set.iter().filter(|t| tokens.contains(t.as_str())).count() as u32;
    NAME_WEIGHT * hits(token_set(lexicon, &tool.name)) + DESCRIPTION_WEIGHT * hits(token_set(lexicon, &tool.description))
}

/// Index of the first maximum. `None` for an empty slice.
pub fn argmax<T: PartialOrd + Copy>(scores: &[T]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if best.is_none_or(|b| *s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

pub fn clarify_question(clause: &str, registry: &Registry) -> String {
    let names: Vec<_> = registry.list().iter().map(|d| d.name.clone()).collect();
    format!(
        "I could not tell which tool \"{}\" asks for. Available tools: {}.",
        clause.trim(),
        names.join(", ")
    )
}

pub fn select_tool(parsed: &ParsedInstruction, registry: &Registry, lexicon: &Lexicon, theta: u32) -> Selection {
    let tools = registry.list();
    let scores: Vec<u32> = tools.iter().map(|t| score(parsed, t, lexicon)).collect();
    match argmax(&scores) {
        Some(i) if scores[i] >= theta && scores[i] > 0 => Selection::Tool {
            name: tools[i].name.clone(),
            score: scores[i],
        },
        _ => Selection::Clarify {
            question: clarify_question(&parsed.raw_text, registry),
        },
    }
}
